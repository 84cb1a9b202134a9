#pragma once

#include <map>
#include <string>
#include <vector>

#include "unirec/model.hpp"

namespace unirec {

// Codebook usage statistics over a catalog's code assignments.
//   activated[l]   : distinct codes used at layer l / K
//   coverage       : distinct full code tuples / m (duplicate_rate = 1 - coverage)
//   unique_items   : items whose tuple no other item shares / m (secondary
//                    reading of "coverage of unique items"; both are reported)
struct CodebookStats {
    std::vector<double> activated;
    double coverage = 0.0;
    double duplicate_rate = 0.0;
    double unique_items = 0.0;

    std::string to_kv_lines() const;
};

CodebookStats codebook_stats(const std::vector<int>& assignments, int codebook_size,
                             int num_layers, int num_items);

// Per-category counts of the most-populated code indices of one layer.
struct CategoryHistogram {
    int layer = 0;
    std::vector<int> top_codes;  // top_n code indices by total item count
    std::map<int, std::map<int, int>> counts_by_code;  // code -> category -> count

    std::string to_text() const;
};

CategoryHistogram category_histogram(const std::vector<int>& assignments, int num_layers,
                                     const std::vector<int>& labels, int layer, int top_n = 3);

// Labeled token export for external projection/plotting. Writes
// codewords.txt (`layer k v1..vD`), assignments.txt (`item_id c1..cL`),
// id_embeddings.txt (`item_id e1..eD`, when the table is present),
// unified.txt (`item_id c1..cL u1..u_H`) and labels.txt (when labels given).
void export_tokens(UnifiedModel& model, const std::vector<std::string>& item_ids,
                   const std::vector<int>& labels, const std::string& dir);

std::vector<int> load_cluster_labels(const std::string& path, const Dataset& dataset);

}  // namespace unirec
