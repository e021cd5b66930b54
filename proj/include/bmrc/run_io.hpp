// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Run configuration files, the prediction record format, and the
// evaluation report.
#pragma once

#include "bmrc/training.hpp"

namespace bmrc {

struct RunConfig {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  EncoderConfig encoder;
  OptimizerConfig optimizer;
  InferenceParams infer;
  DirectionMode direction = DirectionMode::Both;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "out";
};

inline DirectionMode parse_direction(const std::string& s) {
  if (s == "both") return DirectionMode::Both;
  if (s == "ao") return DirectionMode::AO;
  if (s == "oa") return DirectionMode::OA;
  throw ConfigError("direction must be one of both|ao|oa, got '" + s + "'");
}

inline const char* direction_mode_name(DirectionMode m) {
  switch (m) {
    case DirectionMode::Both: return "both";
    case DirectionMode::AO: return "ao";
    case DirectionMode::OA: return "oa";
  }
  return "?";
}

// "key = value" lines; '#' starts a comment; unknown keys are rejected.
inline RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t eq = line.find('=');
    std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ConfigError(where + "expected 'key = value'");
      }
      continue;
    }
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "train_path") cfg.train_path = value;
      else if (key == "dev_path") cfg.dev_path = value;
      else if (key == "test_path") cfg.test_path = value;
      else if (key == "d_h") cfg.encoder.d_h = std::stoi(value);
      else if (key == "n_layers") cfg.encoder.n_layers = std::stoi(value);
      else if (key == "n_heads") cfg.encoder.n_heads = std::stoi(value);
      else if (key == "d_ff") cfg.encoder.d_ff = std::stoi(value);
      else if (key == "max_len") cfg.encoder.max_len = std::stoi(value);
      else if (key == "dropout") cfg.encoder.dropout_rate = std::stod(value);
      else if (key == "head_lr") cfg.optimizer.head_lr = std::stod(value);
      else if (key == "encoder_lr") cfg.optimizer.encoder_lr = std::stod(value);
      else if (key == "weight_decay") cfg.optimizer.weight_decay = std::stod(value);
      else if (key == "warmup") cfg.optimizer.warmup_fraction = std::stod(value);
      else if (key == "batch_size") cfg.optimizer.batch_size = std::stoi(value);
      else if (key == "epochs") cfg.optimizer.epochs = std::stoi(value);
      else if (key == "delta") cfg.infer.delta = std::stod(value);
      else if (key == "tau") cfg.infer.tau = std::stod(value);
      else if (key == "max_span_len") cfg.infer.max_span_len = std::stoi(value);
      else if (key == "direction") cfg.direction = parse_direction(value);
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "seeds") {
        cfg.seeds.clear();
        std::istringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (!trim(item).empty()) cfg.seeds.push_back(std::stoull(trim(item)));
        }
        if (cfg.seeds.empty()) throw ConfigError("seeds list is empty");
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError(where + "bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError(where + "value '" + value + "' out of range for key '" + key + "'");
    }
  }
  return cfg;
}

namespace detail {

inline std::string format_prob(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

// One record per sentence:
//   <id>\t(a_start,a_end,o_start,o_end,TAG,pair_prob,sent_prob);...
// with an empty triplet field for sentences without predictions.
constexpr const char* kPredictionsHeader = "id\ttriplets";

inline std::string format_prediction_record(const std::string& id,
                                            const std::vector<TripletPrediction>& triplets) {
  std::ostringstream out;
  out << id << '\t';
  for (size_t k = 0; k < triplets.size(); ++k) {
    const TripletPrediction& t = triplets[k];
    if (k) out << ';';
    out << '(' << t.aspect.start << ',' << t.aspect.end << ',' << t.opinion.start << ','
        << t.opinion.end << ',' << sentiment_tag(t.sentiment) << ','
        << detail::format_prob(t.pair_probability) << ','
        << detail::format_prob(t.sentiment_probability) << ')';
  }
  return out.str();
}

inline void write_predictions(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<TripletPrediction>>>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions file: " + path);
  out << kPredictionsHeader << '\n';
  for (const auto& [id, triplets] : records) {
    out << format_prediction_record(id, triplets) << '\n';
  }
}

inline std::vector<std::pair<std::string, std::vector<TripletPrediction>>> read_predictions(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty predictions file (no header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kPredictionsHeader) {
    throw ParseError(path + ": missing predictions header line");
  }
  std::vector<std::pair<std::string, std::vector<TripletPrediction>>> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(line_no) + ": ";
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(where + "expected '<id>\\t<triplets>'");
    std::string id = line.substr(0, tab);
    std::string rest = line.substr(tab + 1);
    std::vector<TripletPrediction> triplets;
    size_t pos = 0;
    while (pos < rest.size()) {
      if (rest[pos] == ';') {
        ++pos;
        continue;
      }
      size_t close = rest.find(')', pos);
      if (rest[pos] != '(' || close == std::string::npos) {
        throw ParseError(where + "malformed triplet record near offset " + std::to_string(pos));
      }
      std::string body = rest.substr(pos + 1, close - pos - 1);
      std::vector<std::string> fields;
      std::istringstream bs(body);
      std::string field;
      while (std::getline(bs, field, ',')) fields.push_back(field);
      if (fields.size() != 7) {
        throw ParseError(where + "triplet record needs 7 fields, got " +
                         std::to_string(fields.size()));
      }
      auto tag = sentiment_from_tag(fields[4]);
      if (!tag) throw ParseError(where + "unknown sentiment tag '" + fields[4] + "'");
      try {
        TripletPrediction t;
        t.aspect = {std::stoi(fields[0]), std::stoi(fields[1])};
        t.opinion = {std::stoi(fields[2]), std::stoi(fields[3])};
        t.sentiment = *tag;
        t.pair_probability = std::stod(fields[5]);
        t.sentiment_probability = std::stod(fields[6]);
        triplets.push_back(t);
      } catch (const std::exception&) {
        throw ParseError(where + "malformed number in triplet record");
      }
      pos = close + 1;
    }
    out.emplace_back(std::move(id), std::move(triplets));
  }
  return out;
}

// Per-mode aggregated scores plus the per-run F1 trail.
struct ReportRow {
  MatchMode mode = MatchMode::Triplet;
  PRF aggregated;
  std::vector<double> run_f1s;
};

inline std::string format_report(const std::array<ReportRow, 4>& rows) {
  std::ostringstream out;
  out << "mode\tprecision\trecall\tf1\truns_f1\n";
  for (const ReportRow& row : rows) {
    out << match_mode_name(row.mode) << '\t' << detail::format_prob(row.aggregated.precision)
        << '\t' << detail::format_prob(row.aggregated.recall) << '\t'
        << detail::format_prob(row.aggregated.f1) << '\t';
    for (size_t i = 0; i < row.run_f1s.size(); ++i) {
      if (i) out << ',';
      out << detail::format_prob(row.run_f1s[i]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace bmrc
