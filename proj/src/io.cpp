#include "gul/io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "binary file formats assume a little-endian host");

namespace gul::io {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::string slurp(const std::string& path, bool binary) {
  auto in = open_in(path, binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed: " + path);
  return std::move(buf).str();
}

void finish_write(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

// Little-endian scalar access into a byte buffer.
template <typename T>
T read_scalar(const std::string& buf, std::size_t& offset, const std::string& path) {
  if (offset + sizeof(T) > buf.size()) throw IoError("truncated file: " + path);
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

template <typename T>
void write_scalar(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void write_dense(std::ofstream& out, const Matrix& m) {
  // Matrix is row-major, so the payload is contiguous in file order.
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

Matrix read_dense(const std::string& buf, std::size_t& offset, Eigen::Index rows,
                  Eigen::Index cols, const std::string& path) {
  const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(rows * cols);
  if (offset + bytes > buf.size()) throw IoError("truncated file: " + path);
  Matrix m(rows, cols);
  std::memcpy(m.data(), buf.data() + offset, bytes);
  offset += bytes;
  return m;
}

constexpr char kFeatureMagic[4] = {'G', 'U', 'L', 'F'};
constexpr char kModelMagic[4] = {'G', 'U', 'L', 'M'};
constexpr char kGramMagic[4] = {'G', 'U', 'L', 'G'};

bool has_magic(const std::string& buf, const char (&magic)[4]) {
  return buf.size() >= 4 && std::memcmp(buf.data(), magic, 4) == 0;
}

double parse_double(const std::string& token, const std::string& path, std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw IoError(path + ":" + std::to_string(line) + ": not a number: '" + token + "'");
  }
  if (used != token.size())
    throw IoError(path + ":" + std::to_string(line) + ": trailing junk in number: '" + token +
                  "'");
  return value;
}

}  // namespace

std::vector<std::pair<graph::NodeId, graph::NodeId>> read_edge_list(const std::string& path) {
  auto in = open_in(path, false);
  std::vector<std::pair<graph::NodeId, graph::NodeId>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    long long u = -1, v = -1;
    if (!(row >> u >> v) || u < 0 || v < 0)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'src<TAB>dst', got '" +
                    line + "'");
    std::string rest;
    if (row >> rest)
      throw IoError(path + ":" + std::to_string(lineno) + ": trailing tokens in '" + line + "'");
    edges.emplace_back(static_cast<graph::NodeId>(u), static_cast<graph::NodeId>(v));
  }
  return edges;
}

void write_edge_list(const std::string& path, const graph::Graph& g) {
  auto out = open_out(path, false);
  for (graph::NodeId u = 0; u < g.num_nodes; ++u)
    for (auto e = g.row_ptr[u]; e < g.row_ptr[u + 1]; ++e) {
      const graph::NodeId v = g.col_idx[static_cast<std::size_t>(e)];
      if (u <= v) out << u << '\t' << v << '\n';
    }
  finish_write(out, path);
}

Matrix read_features(const std::string& path) {
  const std::string head = slurp(path, true);
  if (has_magic(head, kFeatureMagic)) return read_features_binary(path);
  return read_features_csv(path);
}

Matrix read_features_csv(const std::string& path) {
  auto in = open_in(path, false);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const std::string token = line.substr(start, comma - start);
      row.push_back(parse_double(token, path, lineno));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(rows.front().size()) + " columns, got " +
                    std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty feature file: " + path);
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return x;
}

Matrix read_features_binary(const std::string& path) {
  const std::string buf = slurp(path, true);
  if (!has_magic(buf, kFeatureMagic)) throw IoError("bad feature-file magic: " + path);
  std::size_t offset = 4;
  const auto n = read_scalar<std::uint32_t>(buf, offset, path);
  const auto d = read_scalar<std::uint32_t>(buf, offset, path);
  const Matrix x = read_dense(buf, offset, n, d, path);
  if (offset != buf.size()) throw IoError("trailing bytes after payload: " + path);
  return x;
}

void write_features_csv(const std::string& path, const Matrix& x) {
  auto out = open_out(path, false);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (j > 0) out << ',';
      out << fmt::format("{}", x(i, j));
    }
    out << '\n';
  }
  finish_write(out, path);
}

void write_features_binary(const std::string& path, const Matrix& x) {
  auto out = open_out(path, true);
  out.write(kFeatureMagic, 4);
  write_scalar(out, static_cast<std::uint32_t>(x.rows()));
  write_scalar(out, static_cast<std::uint32_t>(x.cols()));
  write_dense(out, x);
  finish_write(out, path);
}

std::vector<int> read_labels(const std::string& path) {
  auto in = open_in(path, false);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(line, &used);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": not an integer: '" + line + "'");
    }
    if (used != line.size())
      throw IoError(path + ":" + std::to_string(lineno) + ": trailing junk: '" + line + "'");
    labels.push_back(value);
  }
  if (labels.empty()) throw IoError("empty label file: " + path);
  return labels;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  auto out = open_out(path, false);
  for (int y : labels) out << y << '\n';
  finish_write(out, path);
}

void write_model(const std::string& path, const model::ModelWeights& m) {
  auto out = open_out(path, true);
  out.write(kModelMagic, 4);
  write_scalar(out, static_cast<std::uint32_t>(m.num_classes()));
  write_scalar(out, static_cast<std::uint32_t>(m.dim()));
  write_scalar(out, static_cast<std::uint32_t>(m.loss_kind));
  write_dense(out, m.weights);
  const auto& p = m.provenance;
  const std::string block = fmt::format(
      "lambda={}\neta={}\nepochs={}\nbatch_size={}\nseed={}\ninit_kind={}\n", p.lambda, p.eta,
      p.epochs, p.batch_size, p.seed, p.init_kind);
  write_scalar(out, static_cast<std::uint32_t>(block.size()));
  out.write(block.data(), static_cast<std::streamsize>(block.size()));
  finish_write(out, path);
}

model::ModelWeights read_model(const std::string& path) {
  const std::string buf = slurp(path, true);
  if (!has_magic(buf, kModelMagic)) throw IoError("bad model-file magic: " + path);
  std::size_t offset = 4;
  const auto classes = read_scalar<std::uint32_t>(buf, offset, path);
  const auto dim = read_scalar<std::uint32_t>(buf, offset, path);
  const auto kind_code = read_scalar<std::uint32_t>(buf, offset, path);
  if (kind_code > static_cast<std::uint32_t>(model::LossKind::hinge))
    throw IoError("unknown loss-kind code " + std::to_string(kind_code) + " in " + path);

  model::ModelWeights m;
  m.loss_kind = static_cast<model::LossKind>(kind_code);
  m.weights = read_dense(buf, offset, classes, dim, path);

  const auto block_len = read_scalar<std::uint32_t>(buf, offset, path);
  if (offset + block_len > buf.size()) throw IoError("truncated provenance block: " + path);
  std::istringstream block(buf.substr(offset, block_len));
  offset += block_len;
  if (offset != buf.size()) throw IoError("trailing bytes after payload: " + path);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(block, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path + ": provenance line " + std::to_string(lineno) + " lacks '='");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "lambda")
        m.provenance.lambda = std::stod(value);
      else if (key == "eta")
        m.provenance.eta = std::stod(value);
      else if (key == "epochs")
        m.provenance.epochs = std::stoi(value);
      else if (key == "batch_size")
        m.provenance.batch_size = std::stoll(value);
      else if (key == "seed")
        m.provenance.seed = std::stoull(value);
      else if (key == "init_kind")
        m.provenance.init_kind = value;
      // Unknown keys are skipped so older readers tolerate newer files.
    } catch (const std::exception&) {
      throw IoError(path + ": bad provenance value for '" + key + "': '" + value + "'");
    }
  }
  return m;
}

void write_gram(const std::string& path, const features::GramState& state) {
  auto out = open_out(path, true);
  out.write(kGramMagic, 4);
  write_scalar(out, static_cast<std::uint32_t>(state.dim()));
  write_scalar(out, static_cast<std::uint64_t>(state.source_rows));
  write_dense(out, Matrix(state.gram));
  write_scalar(out, static_cast<std::uint8_t>(state.cached ? 1 : 0));
  if (state.cached) {
    write_scalar(out, state.cached->ridge_eps);
    write_dense(out, Matrix(state.cached->inverse));
  }
  finish_write(out, path);
}

features::GramState read_gram(const std::string& path) {
  const std::string buf = slurp(path, true);
  if (!has_magic(buf, kGramMagic)) throw IoError("bad gram-file magic: " + path);
  std::size_t offset = 4;
  const auto dim = read_scalar<std::uint32_t>(buf, offset, path);
  features::GramState state;
  state.source_rows = static_cast<std::int64_t>(read_scalar<std::uint64_t>(buf, offset, path));
  state.gram = read_dense(buf, offset, dim, dim, path);
  const auto has_cached = read_scalar<std::uint8_t>(buf, offset, path);
  if (has_cached) {
    features::CachedInverse cached;
    cached.ridge_eps = read_scalar<double>(buf, offset, path);
    cached.inverse = read_dense(buf, offset, dim, dim, path);
    state.cached = std::move(cached);
  }
  if (offset != buf.size()) throw IoError("trailing bytes after payload: " + path);
  return state;
}

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path, false);
  out << content;
  finish_write(out, path);
}

std::string read_text_file(const std::string& path) { return slurp(path, false); }

std::string unlearn_result_json(const unlearn::UnlearnResult& res,
                                const std::string& model_path) {
  const auto& d = res.diagnostics;
  json doc = {
      {"strategy", unlearn::strategy_name(res.strategy)},
      {"elapsed_seconds", res.elapsed_seconds},
      {"model_path", model_path},
      {"diagnostics",
       {{"orthogonality_residual", d.orthogonality_residual},
        {"span_precheck_residual", d.span_precheck_residual},
        {"injected_channel_norm", d.injected_channel_norm},
        {"affected_set_size", d.affected_set_size},
        {"noise_draw_seed", d.noise_draw_seed},
        {"noise_applied", d.noise_applied},
        {"used_gram_downdate", d.used_gram_downdate},
        {"capacitance_fallback", d.capacitance_fallback}}},
  };
  return doc.dump(2) + "\n";
}

std::string injection_report_json(const eval::InjectionReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows)
    rows.push_back({{"strategy", unlearn::strategy_name(row.strategy)},
                    {"injected_norm_before", row.injected_norm_before},
                    {"injected_norm_after", row.injected_norm_after},
                    {"accuracy_before", row.accuracy_before},
                    {"accuracy_after", row.accuracy_after},
                    {"unlearn_seconds", row.unlearn_seconds}});
  json doc = {{"injected_channel", report.injected_channel},
              {"deleted", report.deleted.ids()},
              {"retrain_seconds", report.retrain_seconds},
              {"retrain_accuracy", report.retrain_accuracy},
              {"rows", std::move(rows)}};
  return doc.dump(2) + "\n";
}

std::string injection_report_text(const eval::InjectionReport& report) {
  std::string out = fmt::format("{:<16}{:>14}{:>14}{:>10}{:>10}{:>12}\n", "strategy",
                                "norm_before", "norm_after", "acc_bef", "acc_aft", "seconds");
  for (const auto& row : report.rows)
    out += fmt::format("{:<16}{:>14.4e}{:>14.4e}{:>10.4f}{:>10.4f}{:>12.4f}\n",
                       unlearn::strategy_name(row.strategy), row.injected_norm_before,
                       row.injected_norm_after, row.accuracy_before, row.accuracy_after,
                       row.unlearn_seconds);
  out += fmt::format("retrain reference: accuracy {:.4f}, {:.4f} s\n", report.retrain_accuracy,
                     report.retrain_seconds);
  return out;
}

namespace {

json subset_json(const eval::SubsetDistance& entry) {
  if (!entry.present) return {{"present", false}};
  return {{"present", true}, {"value", entry.value}};
}

}  // namespace

std::string closeness_report_json(const eval::ClosenessReport& report) {
  json doc = {{"normalized_weight_diff", report.normalized_weight_diff},
              {"activation_distance",
               {{"deleted", subset_json(report.deleted)},
                {"remaining", subset_json(report.remaining)},
                {"test", subset_json(report.test)}}}};
  return doc.dump(2) + "\n";
}

std::string closeness_report_text(const eval::ClosenessReport& report) {
  auto entry = [](const eval::SubsetDistance& e) {
    return e.present ? fmt::format("{:.6e}", e.value) : std::string("(empty)");
  };
  return fmt::format(
      "normalized_weight_diff  {:.6e}\n"
      "activation_distance     deleted {:>12}  remaining {:>12}  test {:>12}\n",
      report.normalized_weight_diff, entry(report.deleted), entry(report.remaining),
      entry(report.test));
}

std::string sweep_rows_json(const std::vector<eval::SweepRow>& rows) {
  json arr = json::array();
  for (const auto& row : rows)
    arr.push_back({{"ratio", row.ratio},
                   {"seed", row.seed},
                   {"strategy", unlearn::strategy_name(row.strategy)},
                   {"test_accuracy", row.test_accuracy},
                   {"weight_distance", row.weight_distance},
                   {"unlearn_seconds", row.unlearn_seconds}});
  return arr.dump(2) + "\n";
}

std::string sweep_rows_csv(const std::vector<eval::SweepRow>& rows) {
  std::string out = "ratio,seed,strategy,test_accuracy,weight_distance,unlearn_seconds\n";
  for (const auto& row : rows)
    out += fmt::format("{},{},{},{},{},{}\n", row.ratio, row.seed,
                       unlearn::strategy_name(row.strategy), row.test_accuracy,
                       row.weight_distance, row.unlearn_seconds);
  return out;
}

std::string sweep_rows_text(const std::vector<eval::SweepRow>& rows) {
  std::string out = fmt::format("{:>8}{:>8}{:<2}{:<16}{:>10}{:>16}{:>12}\n", "ratio", "seed",
                                "", "strategy", "accuracy", "weight_dist", "seconds");
  for (const auto& row : rows)
    out += fmt::format("{:>8.3f}{:>8}{:<2}{:<16}{:>10.4f}{:>16.6e}{:>12.4f}\n", row.ratio,
                       row.seed, "", unlearn::strategy_name(row.strategy), row.test_accuracy,
                       row.weight_distance, row.unlearn_seconds);
  return out;
}

}  // namespace gul::io
