#include "parle/persistence.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "parle/error.hpp"

namespace parle {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "parle-model-v1";

void put_optional(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void save_model(const std::filesystem::path& path, const FlatParams& params, const ModelHeader& header) {
  json h;
  h["format"] = kFormat;
  h["num_params"] = params.size();
  h["shapes"] = params.shapes();
  h["seed"] = header.seed;
  h["config_hash"] = hex64(header.config_hash);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write model file " + path.string());
  f << h.dump() << '\n';
  std::vector<unsigned char> bytes(params.size() * 8);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(params[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for model file " + path.string());
}

FlatParams load_model(const std::filesystem::path& path, ModelHeader* header) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open model file " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw FormatError(path.string() + ": missing model header");

  json h;
  std::vector<Shape> shapes;
  std::size_t count = 0;
  try {
    h = json::parse(line);
    if (h.at("format").get<std::string>() != kFormat) throw FormatError(path.string() + ": unknown model format");
    count = h.at("num_params").get<std::size_t>();
    shapes = h.at("shapes").get<std::vector<Shape>>();
    if (header) {
      header->seed = h.at("seed").get<std::uint64_t>();
      header->config_hash = std::stoull(h.at("config_hash").get<std::string>(), nullptr, 16);
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad model header: " + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(path.string() + ": bad model header: " + e.what());
  }

  std::vector<unsigned char> bytes(count * 8);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != bytes.size()) {
    throw FormatError(path.string() + ": truncated parameter data");
  }
  if (f.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");

  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  try {
    return FlatParams(std::move(values), std::move(shapes));
  } catch (const DimensionError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string metrics_line(const EpochRow& row) {
  json j;
  j["epoch"] = row.epoch;
  j["step"] = row.step;
  j["train_loss"] = row.train_loss;
  put_optional(j, "train_error", row.train_error);
  put_optional(j, "val_error", row.val_error);
  put_optional(j, "gamma", row.gamma);
  put_optional(j, "rho", row.rho);
  put_optional(j, "collapse", row.collapse);
  put_optional(j, "objective", row.objective);
  put_optional(j, "dist_to_opt", row.dist_to_opt);
  j["grad_evals"] = row.grad_evals;
  j["ledger"] = {{"floats_up", row.ledger.floats_up},
                 {"floats_down", row.ledger.floats_down},
                 {"reduce_events", row.ledger.reduce_events},
                 {"grad_evals", row.ledger.grad_evals}};
  return j.dump();
}

std::string timing_line(const EpochRow& row) {
  json j;
  j["epoch"] = row.epoch;
  j["wall_seconds"] = row.wall_seconds;
  return j.dump();
}

std::string metrics_jsonl(const RunRecord& record) {
  std::string out;
  for (const auto& row : record.rows) out += metrics_line(row) + "\n";
  return out;
}

std::string summary_csv(const RunRecord& record) {
  std::ostringstream s;
  s << "algorithm,n,num_params,L,B,seed,epochs,grad_evals,floats_up,floats_down,reduce_events,"
       "train_loss,train_error,val_error,objective,dist_to_opt,collapse,config_hash\n";
  if (record.rows.empty()) return s.str();
  const EpochRow& last = record.rows.back();
  s << to_string(record.algorithm) << ',' << record.n << ',' << record.num_params << ',' << record.L << ','
    << record.B << ',' << record.seed << ',' << last.epoch << ',' << record.grad_evals << ','
    << record.ledger.floats_up << ',' << record.ledger.floats_down << ',' << record.ledger.reduce_events << ','
    << fmt_double(last.train_loss) << ',' << fmt_optional(last.train_error) << ','
    << fmt_optional(last.val_error) << ',' << fmt_optional(last.objective) << ','
    << fmt_optional(last.dist_to_opt) << ',' << fmt_optional(last.collapse) << ','
    << hex64(record.config_hash) << '\n';
  return s.str();
}

}  // namespace parle
