#include "unirec/diagnostics.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "unirec/common.hpp"

namespace unirec {

std::string CodebookStats::to_kv_lines() const {
    std::ostringstream os;
    char buf[96];
    for (size_t l = 0; l < activated.size(); ++l) {
        std::snprintf(buf, sizeof(buf), "activated_layer%zu %.17g\n", l + 1, activated[l]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "coverage %.17g\n", coverage);
    os << buf;
    std::snprintf(buf, sizeof(buf), "duplicate_rate %.17g\n", duplicate_rate);
    os << buf;
    std::snprintf(buf, sizeof(buf), "unique_items %.17g\n", unique_items);
    os << buf;
    return os.str();
}

CodebookStats codebook_stats(const std::vector<int>& assignments, int codebook_size,
                             int num_layers, int num_items) {
    if (static_cast<size_t>(num_items) * num_layers != assignments.size()) {
        throw std::invalid_argument("codebook_stats: assignment size != m * L");
    }
    CodebookStats s;
    s.activated.resize(static_cast<size_t>(num_layers));
    for (int l = 0; l < num_layers; ++l) {
        std::unordered_set<int> used;
        for (int i = 0; i < num_items; ++i) {
            const int c = assignments[static_cast<size_t>(i) * num_layers + l];
            if (c < 0 || c >= codebook_size) {
                throw std::invalid_argument("codebook_stats: code out of range");
            }
            used.insert(c);
        }
        s.activated[static_cast<size_t>(l)] =
            static_cast<double>(used.size()) / static_cast<double>(codebook_size);
    }
    std::unordered_map<std::string, int> tuple_counts;
    for (int i = 0; i < num_items; ++i) {
        std::string key;
        for (int l = 0; l < num_layers; ++l) {
            key += std::to_string(assignments[static_cast<size_t>(i) * num_layers + l]);
            key += ',';
        }
        ++tuple_counts[key];
    }
    int unique = 0;
    for (const auto& [key, count] : tuple_counts) {
        if (count == 1) ++unique;
    }
    s.coverage = static_cast<double>(tuple_counts.size()) / static_cast<double>(num_items);
    s.duplicate_rate = 1.0 - s.coverage;
    s.unique_items = static_cast<double>(unique) / static_cast<double>(num_items);
    return s;
}

std::string CategoryHistogram::to_text() const {
    std::ostringstream os;
    os << "layer " << layer + 1 << " top codes";
    for (int c : top_codes) os << ' ' << c;
    os << '\n';
    for (int c : top_codes) {
        os << "code " << c << ":";
        auto it = counts_by_code.find(c);
        if (it != counts_by_code.end()) {
            for (const auto& [cat, count] : it->second) {
                os << " cat" << cat << "=" << count;
            }
        }
        os << '\n';
    }
    return os.str();
}

CategoryHistogram category_histogram(const std::vector<int>& assignments, int num_layers,
                                     const std::vector<int>& labels, int layer, int top_n) {
    const int m = static_cast<int>(labels.size());
    if (static_cast<size_t>(m) * num_layers != assignments.size()) {
        throw std::invalid_argument("category_histogram: labels must cover all items");
    }
    if (layer < 0 || layer >= num_layers) {
        throw std::invalid_argument("category_histogram: layer out of range");
    }
    CategoryHistogram h;
    h.layer = layer;
    std::map<int, int> totals;
    for (int i = 0; i < m; ++i) {
        const int code = assignments[static_cast<size_t>(i) * num_layers + layer];
        ++h.counts_by_code[code][labels[static_cast<size_t>(i)]];
        ++totals[code];
    }
    std::vector<std::pair<int, int>> order(totals.begin(), totals.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (int i = 0; i < top_n && i < static_cast<int>(order.size()); ++i) {
        h.top_codes.push_back(order[static_cast<size_t>(i)].first);
    }
    return h;
}

void export_tokens(UnifiedModel& model, const std::vector<std::string>& item_ids,
                   const std::vector<int>& labels, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int m = model.num_items();
    if (static_cast<int>(item_ids.size()) != m) {
        throw std::invalid_argument("export_tokens: item id count mismatch");
    }
    char buf[40];

    std::vector<int> codes;
    if (model.uses_quantizer()) {
        RqVae& rq = model.quantizer();
        const CodebookSet& books = rq.codebooks();

        std::ofstream cw(dir + "/codewords.txt", std::ios::trunc);
        if (!cw) throw DataError("cannot write " + dir + "/codewords.txt");
        for (int l = 0; l < books.num_layers; ++l) {
            const Tensor& book = books.layers[static_cast<size_t>(l)].value;
            for (int k = 0; k < books.codebook_size; ++k) {
                cw << l + 1 << ' ' << k;
                for (int d = 0; d < books.dim; ++d) {
                    std::snprintf(buf, sizeof(buf), " %.17g",
                                  book.data[static_cast<size_t>(k) * books.dim + d]);
                    cw << buf;
                }
                cw << '\n';
            }
        }

        codes = rq.assign_codes(model.embeddings());
        std::ofstream as(dir + "/assignments.txt", std::ios::trunc);
        if (!as) throw DataError("cannot write " + dir + "/assignments.txt");
        for (int i = 0; i < m; ++i) {
            as << item_ids[static_cast<size_t>(i)];
            for (int l = 0; l < books.num_layers; ++l) {
                as << ' ' << codes[static_cast<size_t>(i) * books.num_layers + l];
            }
            as << '\n';
        }
    }

    if (model.id_table().present()) {
        std::ofstream ie(dir + "/id_embeddings.txt", std::ios::trunc);
        if (!ie) throw DataError("cannot write " + dir + "/id_embeddings.txt");
        const IdEmbeddingTable& table = model.id_table();
        for (int i = 0; i < m; ++i) {
            ie << item_ids[static_cast<size_t>(i)];
            for (int d = 0; d < table.dim; ++d) {
                std::snprintf(buf, sizeof(buf), " %.17g",
                              table.table.value.data[static_cast<size_t>(i) * table.dim + d]);
                ie << buf;
            }
            ie << '\n';
        }
    }

    {
        const Tensor reprs = model.repr_values();
        const int hid = reprs.dim(1);
        const int L = model.uses_quantizer() ? model.quantizer().num_layers() : 0;
        std::ofstream un(dir + "/unified.txt", std::ios::trunc);
        if (!un) throw DataError("cannot write " + dir + "/unified.txt");
        for (int i = 0; i < m; ++i) {
            un << item_ids[static_cast<size_t>(i)];
            for (int l = 0; l < L; ++l) un << ' ' << codes[static_cast<size_t>(i) * L + l];
            for (int d = 0; d < hid; ++d) {
                std::snprintf(buf, sizeof(buf), " %.17g",
                              reprs.data[static_cast<size_t>(i) * hid + d]);
                un << buf;
            }
            un << '\n';
        }
    }

    if (!labels.empty()) {
        if (static_cast<int>(labels.size()) != m) {
            throw std::invalid_argument("export_tokens: label count mismatch");
        }
        write_clusters_tsv(dir + "/labels.txt", item_ids, labels);
    }
}

std::vector<int> load_cluster_labels(const std::string& path, const Dataset& dataset) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open cluster labels: " + path);
    std::unordered_map<std::string, int> by_id;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("malformed cluster line " + std::to_string(line_no) + ": " + path);
        }
        try {
            by_id[line.substr(0, tab)] = std::stoi(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw DataError("bad cluster label on line " + std::to_string(line_no) + ": " + path);
        }
    }
    std::vector<int> labels(static_cast<size_t>(dataset.num_items()));
    for (int i = 0; i < dataset.num_items(); ++i) {
        auto it = by_id.find(dataset.item_ids[static_cast<size_t>(i)]);
        if (it == by_id.end()) {
            throw DataError("cluster labels missing item " + dataset.item_ids[static_cast<size_t>(i)]);
        }
        labels[static_cast<size_t>(i)] = it->second;
    }
    return labels;
}

}  // namespace unirec
