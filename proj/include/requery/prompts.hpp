#pragma once

// Prompt templates used by the rewriter, relevance filter, and reranker.
// These strings are part of the engine's external contract: cache keys and
// recorded traces depend on their exact bytes, so any change invalidates
// existing caches. The golden files under tests/goldens pin them.

namespace requery::prompts {

// Bump when any template below changes, so cache files can be told apart.
inline constexpr int kPromptVersion = 1;

inline constexpr const char* kAssistantSystem =
    "You are an AI assistant that helps people find information.";

// ---- Query rewriting ----

inline constexpr const char* kRewriteHeader =
    "I am using a search engine to find relevant documents related to the given TOPIC. "
    "The search engine doesn't work very well.\n"
    "I will give you the top search results for various QUERIES that I tried.\n"
    "You should suggest me other topics that I should search in order to find more interesting "
    "documents relevant to the TOPIC.\n"
    "\n"
    "Since the search engine mostly does lexical matching, it could be weak in retrieving "
    "documents containing some words. Use those words to improve the overall search quality.\n"
    "\n"
    "Also, use your own knowledge and understanding of the TOPIC to generate rewrites related to "
    "topics which might not be present in the retrieved documents.\n"
    "\n"
    "Enclose the answer in <Rewrite></Rewrite>. Do not give any explanation.\n"
    "\n"
    "TOPIC: ";

// Appended per round: "\n\nQUERY #<i>: <query>\n\nTOP RESULTS:" then
// "\n\n<j>. <document>" for each feedback document.

// ---- Relevance scoring ----

inline constexpr const char* kRelevanceTemplate =
    "Given a QUERY and a DOCUMENT, score the DOCUMENT on a scale of 1(least relevant to QUERY) "
    "to 5(most relevant to QUERY).\n"
    "Enclose the answer in <Score></Score>. For instance if you think the score should be 4, "
    "then answer <Score>4</Score>. Do not give any explanation.\n"
    "\n"
    "QUERY: {query}\n"
    "\n"
    "DOCUMENT: {document}";

// ---- Listwise reranking ----

inline constexpr const char* kRerankSystem =
    "You are RankGPT, an intelligent assistant that can rank passages based on their relevancy "
    "to the query.";

inline constexpr const char* kRerankOpening =
    "I will provide you with {num} passages, each indicated by number identifier [].\n"
    "Rank the passages based on their relevance to query: {query}";

inline constexpr const char* kRerankOpeningReply = "Okay, please provide the passages.";

// Per passage: user "[<i>] <passage>", assistant "Received passage [<i>]".

inline constexpr const char* kRerankClosing =
    "Rank the {num} passages above based on their relevance to the search query. The passages "
    "should be listed in descending order using identifiers. The most relevant passages should "
    "be listed first. The output format should be [] > [], e.g., [1] > [2]. Only response the "
    "ranking results, do not say any word or explain.";

}  // namespace requery::prompts
