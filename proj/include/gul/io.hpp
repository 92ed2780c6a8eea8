#pragma once

#include "gul/eval.hpp"
#include "gul/features.hpp"
#include "gul/unlearn.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gul::io {

// All readers throw IoError for missing files or malformed contents, naming
// the path. Writers are deterministic byte-for-byte for identical inputs:
// floats are printed with round-trip precision and binary payloads are raw
// little-endian IEEE doubles.

// --- edge list: one `src<TAB>dst` per line, 0-based, undirected pairs
// --- listed once; blank lines and `#` comments ignored.
std::vector<std::pair<graph::NodeId, graph::NodeId>> read_edge_list(const std::string& path);
void write_edge_list(const std::string& path, const graph::Graph& g);

// --- features: CSV (n rows x d columns of decimals) or binary ("GULF"
// --- magic, then n and d as little-endian uint32, then row-major float64).
// --- read_features sniffs the magic and dispatches.
Matrix read_features(const std::string& path);
Matrix read_features_csv(const std::string& path);
Matrix read_features_binary(const std::string& path);
void write_features_csv(const std::string& path, const Matrix& x);
void write_features_binary(const std::string& path, const Matrix& x);

// --- labels: one integer per line (-1/+1 binary or 0..C-1 multi-class).
std::vector<int> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<int>& labels);

// --- model: "GULM" magic, then C, d, loss-kind code as little-endian
// --- uint32, row-major float64 weights, and a length-prefixed UTF-8
// --- key=value provenance block.
void write_model(const std::string& path, const model::ModelWeights& m);
model::ModelWeights read_model(const std::string& path);

// --- precomputed gram state: "GULG" magic, d as little-endian uint32, the
// --- source row count, the d x d gram, and optionally the cached ridge
// --- inverse (flag byte + ridge + d x d inverse).
void write_gram(const std::string& path, const features::GramState& state);
features::GramState read_gram(const std::string& path);

// --- generic text files (reports, manifests).
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// --- report serialization. JSON is machine-format (sorted keys, 2-space
// --- indent); the *_text forms are aligned-column summaries for humans.
std::string unlearn_result_json(const unlearn::UnlearnResult& res,
                                const std::string& model_path);
std::string injection_report_json(const eval::InjectionReport& report);
std::string injection_report_text(const eval::InjectionReport& report);
std::string closeness_report_json(const eval::ClosenessReport& report);
std::string closeness_report_text(const eval::ClosenessReport& report);
std::string sweep_rows_json(const std::vector<eval::SweepRow>& rows);
std::string sweep_rows_csv(const std::vector<eval::SweepRow>& rows);
std::string sweep_rows_text(const std::vector<eval::SweepRow>& rows);

}  // namespace gul::io
