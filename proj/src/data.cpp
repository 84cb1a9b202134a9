#include "unirec/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "unirec/common.hpp"

namespace unirec {

namespace {

bool parse_int64(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    out = static_cast<int64_t>(v);
    return true;
}

bool parse_double(const char* s, const char** end_out, double& out) {
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s, &end);
    if (end == s) return false;
    *end_out = end;
    return true;
}

}  // namespace

std::vector<InteractionRecord> load_interactions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open interactions file: " + path);
    std::vector<InteractionRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw DataError("malformed interaction line " + std::to_string(line_no) +
                            " (expected user\\titem\\ttimestamp): " + path);
        }
        InteractionRecord rec;
        rec.user_id = line.substr(0, t1);
        rec.item_id = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string ts = line.substr(t2 + 1);
        if (rec.user_id.empty() || rec.item_id.empty()) {
            throw DataError("empty user or item id on line " + std::to_string(line_no) + ": " + path);
        }
        if (!parse_int64(ts, rec.timestamp) || rec.timestamp < 0) {
            throw DataError("invalid timestamp on line " + std::to_string(line_no) + ": " + path);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

Dataset five_core_filter(const std::vector<InteractionRecord>& records, CoreFilterMode mode,
                         int min_count) {
    if (records.empty()) throw DataError("five_core_filter: no interactions");

    std::vector<char> alive(records.size(), 1);
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, int> user_count;
        std::unordered_map<std::string, int> item_count;
        for (size_t i = 0; i < records.size(); ++i) {
            if (!alive[i]) continue;
            ++user_count[records[i].user_id];
            ++item_count[records[i].item_id];
        }
        for (size_t i = 0; i < records.size(); ++i) {
            if (!alive[i]) continue;
            const bool drop_user = user_count[records[i].user_id] < min_count;
            const bool drop_item =
                mode == CoreFilterMode::user_and_item && item_count[records[i].item_id] < min_count;
            if (drop_user || drop_item) {
                alive[i] = 0;
                changed = true;
            }
        }
    }

    Dataset ds;
    struct Entry {
        int64_t timestamp;
        size_t order;
        int item;
    };
    std::vector<std::vector<Entry>> per_user;
    for (size_t i = 0; i < records.size(); ++i) {
        if (!alive[i]) continue;
        const InteractionRecord& r = records[i];
        auto uit = ds.user_index.find(r.user_id);
        int u;
        if (uit == ds.user_index.end()) {
            u = ds.num_users();
            ds.user_index.emplace(r.user_id, u);
            ds.user_ids.push_back(r.user_id);
            per_user.emplace_back();
        } else {
            u = uit->second;
        }
        auto iit = ds.item_index.find(r.item_id);
        int it;
        if (iit == ds.item_index.end()) {
            it = ds.num_items();
            ds.item_index.emplace(r.item_id, it);
            ds.item_ids.push_back(r.item_id);
        } else {
            it = iit->second;
        }
        per_user[static_cast<size_t>(u)].push_back({r.timestamp, i, it});
    }
    if (ds.num_users() == 0) throw DataError("dataset eliminated by filtering");

    ds.sequences.resize(per_user.size());
    for (size_t u = 0; u < per_user.size(); ++u) {
        auto& entries = per_user[u];
        std::stable_sort(entries.begin(), entries.end(),
                         [](const Entry& a, const Entry& b) { return a.timestamp < b.timestamp; });
        ds.sequences[u].reserve(entries.size());
        for (const Entry& e : entries) ds.sequences[u].push_back(e.item);
    }
    return ds;
}

SplitAssignment leave_one_out_split(const Dataset& dataset) {
    SplitAssignment split;
    split.train.reserve(dataset.sequences.size());
    for (size_t u = 0; u < dataset.sequences.size(); ++u) {
        const auto& seq = dataset.sequences[u];
        if (seq.size() < 3) {
            throw DataError("leave_one_out_split: user " + dataset.user_ids[u] +
                            " has fewer than 3 interactions");
        }
        split.test.push_back(seq.back());
        split.valid.push_back(seq[seq.size() - 2]);
        split.train.emplace_back(seq.begin(), seq.end() - 2);
    }
    return split;
}

EmbeddingMatrix load_item_embeddings(const std::string& path, const Dataset& dataset) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open embeddings file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("embeddings file is empty: " + path);
    std::istringstream header(line);
    int64_t m = 0, dim = 0;
    if (!(header >> m >> dim) || m < 0 || dim < 1) {
        throw DataError("bad embeddings header (expected `m dim`): " + path);
    }

    std::unordered_map<std::string, std::vector<double>> by_id;
    by_id.reserve(static_cast<size_t>(m));
    int line_no = 1;
    for (int64_t r = 0; r < m; ++r) {
        if (!std::getline(is, line)) {
            throw DataError("embeddings file truncated after line " + std::to_string(line_no) +
                            ": " + path);
        }
        ++line_no;
        const char* p = line.c_str();
        while (*p == ' ' || *p == '\t') ++p;
        const char* id_start = p;
        while (*p && *p != ' ' && *p != '\t') ++p;
        std::string id(id_start, p);
        if (id.empty()) {
            throw DataError("missing item id on line " + std::to_string(line_no) + ": " + path);
        }
        std::vector<double> vals;
        vals.reserve(static_cast<size_t>(dim));
        for (int64_t d = 0; d < dim; ++d) {
            double v;
            const char* end = nullptr;
            if (!parse_double(p, &end, v)) {
                throw DataError("embedding dimension mismatch on line " + std::to_string(line_no) +
                                " (expected " + std::to_string(dim) + " values): " + path);
            }
            if (!std::isfinite(v)) {
                throw DataError("non-finite embedding value on line " + std::to_string(line_no) +
                                ": " + path);
            }
            vals.push_back(v);
            p = end;
        }
        while (*p == ' ' || *p == '\t') ++p;
        if (*p) {
            throw DataError("trailing data on line " + std::to_string(line_no) + ": " + path);
        }
        by_id[std::move(id)] = std::move(vals);
    }

    EmbeddingMatrix emb;
    emb.m = dataset.num_items();
    emb.dim = static_cast<int>(dim);
    emb.rows.resize(static_cast<size_t>(emb.m) * emb.dim);
    for (int i = 0; i < dataset.num_items(); ++i) {
        auto it = by_id.find(dataset.item_ids[static_cast<size_t>(i)]);
        if (it == by_id.end()) {
            throw DataError("embeddings file is missing item " +
                            dataset.item_ids[static_cast<size_t>(i)] + ": " + path);
        }
        std::copy(it->second.begin(), it->second.end(), emb.row(i));
    }
    return emb;
}

EmbeddingMatrix synthesize_embeddings(int num_items, int num_clusters, int dim,
                                      double noise_scale, uint64_t seed) {
    if (num_items < 1) throw DataError("synthesize_embeddings: num_items must be >= 1");
    if (num_clusters < 1 || num_clusters > num_items) {
        throw DataError("synthesize_embeddings: need 1 <= num_clusters <= num_items");
    }
    if (dim < 1) throw DataError("synthesize_embeddings: dim must be >= 1");
    if (noise_scale < 0.0) throw DataError("synthesize_embeddings: noise_scale must be >= 0");

    Rng rng(Rng::mix(seed, 0x5EEDBEEF));
    std::vector<double> centroids(static_cast<size_t>(num_clusters) * dim);
    for (int c = 0; c < num_clusters; ++c) {
        double* row = centroids.data() + static_cast<size_t>(c) * dim;
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (int d = 0; d < dim; ++d) {
                row[d] = rng.normal();
                norm2 += row[d] * row[d];
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (int d = 0; d < dim; ++d) row[d] *= inv;
    }

    EmbeddingMatrix emb;
    emb.m = num_items;
    emb.dim = dim;
    emb.rows.resize(static_cast<size_t>(num_items) * dim);
    emb.cluster_labels.resize(static_cast<size_t>(num_items));
    for (int i = 0; i < num_items; ++i) {
        const int c = i % num_clusters;
        emb.cluster_labels[static_cast<size_t>(i)] = c;
        const double* ctr = centroids.data() + static_cast<size_t>(c) * dim;
        double* row = emb.row(i);
        for (int d = 0; d < dim; ++d) row[d] = ctr[d] + noise_scale * rng.normal();
    }
    return emb;
}

std::vector<int> sample_eval_candidates(const Dataset& dataset, const SplitAssignment& split,
                                        int user, SplitStage stage, int num_negatives,
                                        uint64_t seed) {
    const auto& seq = dataset.sequences[static_cast<size_t>(user)];
    std::unordered_set<int> history(seq.begin(), seq.end());
    std::vector<int> pool;
    pool.reserve(static_cast<size_t>(dataset.num_items()));
    for (int i = 0; i < dataset.num_items(); ++i) {
        if (!history.count(i)) pool.push_back(i);
    }
    if (static_cast<int>(pool.size()) < num_negatives) {
        throw DataError("catalog too small to sample " + std::to_string(num_negatives) +
                        " negatives for user " + dataset.user_ids[static_cast<size_t>(user)]);
    }
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(user)));
    for (int j = 0; j < num_negatives; ++j) {
        const uint64_t k = static_cast<uint64_t>(j) + rng.below(pool.size() - static_cast<size_t>(j));
        std::swap(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(k)]);
    }
    std::vector<int> out(pool.begin(), pool.begin() + num_negatives);
    out.push_back(stage == SplitStage::valid ? split.valid[static_cast<size_t>(user)]
                                             : split.test[static_cast<size_t>(user)]);
    return out;
}

std::string synthetic_item_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "i%06d", index);
    return buf;
}

std::string synthetic_user_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%06d", index);
    return buf;
}

std::vector<int> synthetic_item_clusters(int num_items, int num_clusters) {
    std::vector<int> labels(static_cast<size_t>(num_items));
    for (int i = 0; i < num_items; ++i) labels[static_cast<size_t>(i)] = i % num_clusters;
    return labels;
}

namespace {

// Generator shape constants; tuned so that a mean-length-10 corpus survives
// 5-core filtering nearly intact while next-item prediction stays learnable
// but not saturated. Two properties carry the sequential signal:
//   - each item deterministically points at the cluster the next item is
//     drawn from (successor_cluster), so telling items apart matters;
//   - the cold tail of every cluster surfaces mostly near sequence ends
//     (item churn), keeping per-item signal sparse for those items.
constexpr double kExploreProb = 0.10;
constexpr double kItemTransitionProb = 0.8;  // next cluster chosen by the previous item
constexpr double kPopularityExponent = 0.8;
constexpr double kColdFraction = 0.4;    // tail share of each cluster
constexpr double kColdAnyProb = 0.12;    // cold-draw chance at ordinary positions
constexpr double kColdTailProb = 0.45;   // cold-draw chance at the last two positions

int successor_cluster(int item, int num_clusters) {
    return (item * 7 + 3) % num_clusters;
}

}  // namespace

std::vector<InteractionRecord> synthesize_interactions(const SyntheticDataSpec& spec) {
    if (spec.num_users < 1) throw DataError("synthesize_interactions: num_users must be >= 1");
    if (spec.num_items < 1) throw DataError("synthesize_interactions: num_items must be >= 1");
    if (spec.num_clusters < 1 || spec.num_clusters > spec.num_items) {
        throw DataError("synthesize_interactions: need 1 <= num_clusters <= num_items");
    }
    if (spec.seq_len_mean < 1.0) {
        throw DataError("synthesize_interactions: seq_len_mean must be >= 1");
    }

    const int C = spec.num_clusters;
    // items of cluster c are {c, c+C, c+2C, ...}, matching synthesize_embeddings
    std::vector<std::vector<int>> cluster_items(static_cast<size_t>(C));
    for (int i = 0; i < spec.num_items; ++i) {
        cluster_items[static_cast<size_t>(i % C)].push_back(i);
    }
    // popularity cdf over the warm head of each cluster; the cold tail is
    // reached mainly through end-of-sequence draws
    std::vector<std::vector<double>> cluster_cdf(static_cast<size_t>(C));
    std::vector<size_t> warm_count(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        const auto& items = cluster_items[static_cast<size_t>(c)];
        size_t warm = std::max<size_t>(1, static_cast<size_t>(
                                              std::lround(items.size() * (1.0 - kColdFraction))));
        warm = std::min(warm, items.size());
        warm_count[static_cast<size_t>(c)] = warm;
        double acc = 0.0;
        cluster_cdf[static_cast<size_t>(c)].reserve(warm);
        for (size_t j = 0; j < warm; ++j) {
            acc += 1.0 / std::pow(static_cast<double>(j + 1), kPopularityExponent);
            cluster_cdf[static_cast<size_t>(c)].push_back(acc);
        }
    }

    const int len_lo = spec.seq_len_mean >= 8.0 ? 6 : 3;
    const int len_hi = std::max(len_lo + 1, static_cast<int>(std::lround(1.6 * spec.seq_len_mean)));

    Rng rng(Rng::mix(spec.seed, 0x1A7E2AC7));
    std::vector<InteractionRecord> records;
    records.reserve(static_cast<size_t>(spec.num_users) *
                    static_cast<size_t>(spec.seq_len_mean + 1));

    std::vector<char> used(static_cast<size_t>(spec.num_items));
    for (int u = 0; u < spec.num_users; ++u) {
        int len = static_cast<int>(std::lround(spec.seq_len_mean + (spec.seq_len_mean / 5.0) * rng.normal()));
        len = std::max(len_lo, std::min(len_hi, len));
        len = std::min(len, spec.num_items);

        std::fill(used.begin(), used.end(), 0);
        int current = u % C;
        int prev_item = -1;
        const std::string user_id = synthetic_user_id(u);
        for (int t = 0; t < len; ++t) {
            int item = -1;
            if (rng.uniform01() < kExploreProb) {
                item = static_cast<int>(rng.below(static_cast<uint64_t>(spec.num_items)));
            } else {
                // the previous item points at the next cluster; occasionally
                // the walk resets to a random cluster
                if (prev_item >= 0 && rng.uniform01() < kItemTransitionProb) {
                    current = successor_cluster(prev_item, C);
                } else {
                    current = static_cast<int>(rng.below(static_cast<uint64_t>(C)));
                }
                const auto& items = cluster_items[static_cast<size_t>(current)];
                const size_t warm = warm_count[static_cast<size_t>(current)];
                const double cold_prob = t >= len - 2 ? kColdTailProb : kColdAnyProb;
                if (warm < items.size() && rng.uniform01() < cold_prob) {
                    const size_t cold = items.size() - warm;
                    item = items[warm + rng.below(cold)];
                } else {
                    const auto& cdf = cluster_cdf[static_cast<size_t>(current)];
                    const double r = rng.uniform01() * cdf.back();
                    const size_t pos = static_cast<size_t>(
                        std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
                    item = items[std::min(pos, warm - 1)];
                }
            }
            if (used[static_cast<size_t>(item)]) {
                // already consumed; take the nearest unused item in catalog order
                int probe = item;
                int steps = 0;
                while (used[static_cast<size_t>(probe)] && steps < spec.num_items) {
                    probe = (probe + 1) % spec.num_items;
                    ++steps;
                }
                if (used[static_cast<size_t>(probe)]) break;
                item = probe;
            }
            used[static_cast<size_t>(item)] = 1;
            prev_item = item;
            records.push_back({user_id, synthetic_item_id(item), static_cast<int64_t>(t)});
        }
    }
    return records;
}

void write_interactions_tsv(const std::string& path,
                            const std::vector<InteractionRecord>& records) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    for (const auto& r : records) {
        os << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\n';
    }
    if (!os) throw DataError("write failed: " + path);
}

void write_embeddings_txt(const std::string& path, const std::vector<std::string>& item_ids,
                          const EmbeddingMatrix& embeddings) {
    if (static_cast<int>(item_ids.size()) != embeddings.m) {
        throw DataError("write_embeddings_txt: id and row counts differ");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << embeddings.m << ' ' << embeddings.dim << '\n';
    char buf[32];
    for (int i = 0; i < embeddings.m; ++i) {
        os << item_ids[static_cast<size_t>(i)];
        const double* row = embeddings.row(i);
        for (int d = 0; d < embeddings.dim; ++d) {
            std::snprintf(buf, sizeof(buf), " %.17g", row[d]);
            os << buf;
        }
        os << '\n';
    }
    if (!os) throw DataError("write failed: " + path);
}

void write_clusters_tsv(const std::string& path, const std::vector<std::string>& item_ids,
                        const std::vector<int>& labels) {
    if (item_ids.size() != labels.size()) {
        throw DataError("write_clusters_tsv: id and label counts differ");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    for (size_t i = 0; i < item_ids.size(); ++i) {
        os << item_ids[i] << '\t' << labels[i] << '\n';
    }
    if (!os) throw DataError("write failed: " + path);
}

}  // namespace unirec
