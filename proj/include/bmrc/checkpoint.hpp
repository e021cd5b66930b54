// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Checkpoint container: a text header naming tensors and shapes followed
// by row-major little-endian float32 data. Vocabulary as token-per-line.
#pragma once

#include <cstdio>

#include "bmrc/model.hpp"

namespace bmrc {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write vocabulary file: " + path);
  for (int i = 0; i < vocab.size(); ++i) out << vocab.token(i) << '\n';
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open vocabulary file: " + path);
  Vocabulary vocab;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (id < vocab.size()) {
      if (line != vocab.token(id)) {
        throw CheckpointError("vocabulary file " + path + ": reserved token mismatch at id " +
                              std::to_string(id));
      }
    } else if (vocab.add(line) != id) {
      throw CheckpointError("vocabulary file " + path + ": duplicate token '" + line + "'");
    }
    ++id;
  }
  return vocab;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void save_checkpoint(BmrcModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint file: " + path);
  const EncoderConfig& cfg = model.config();
  out << "bmrc-checkpoint v1\n";
  out << "meta d_h " << cfg.d_h << '\n';
  out << "meta n_layers " << cfg.n_layers << '\n';
  out << "meta n_heads " << cfg.n_heads << '\n';
  out << "meta d_ff " << cfg.d_ff << '\n';
  out << "meta max_len " << cfg.max_len << '\n';
  out << "meta dropout_rate " << detail::format_double(cfg.dropout_rate) << '\n';
  out << "meta vocab_size " << model.vocab().size() << '\n';
  auto params = model.params();
  for (const NamedParam& p : params) {
    out << "tensor " << p.name << ' ' << p.param->v.rows() << ' ' << p.param->v.cols() << '\n';
  }
  out << "data\n";
  for (const NamedParam& p : params) {
    const Eigen::MatrixXd& m = p.param->v;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        float f = static_cast<float>(m(i, j));
        out.write(reinterpret_cast<const char*>(&f), sizeof(f));
      }
    }
  }
  if (!out) throw CheckpointError("I/O error while writing checkpoint: " + path);
}

inline BmrcModel load_checkpoint(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "bmrc-checkpoint v1") {
    throw CheckpointError(path + ": not a bmrc checkpoint (bad magic line)");
  }
  EncoderConfig cfg;
  int vocab_size = -1;
  std::vector<std::pair<std::string, std::pair<long, long>>> tensors;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      if (key == "d_h") ls >> cfg.d_h;
      else if (key == "n_layers") ls >> cfg.n_layers;
      else if (key == "n_heads") ls >> cfg.n_heads;
      else if (key == "d_ff") ls >> cfg.d_ff;
      else if (key == "max_len") ls >> cfg.max_len;
      else if (key == "dropout_rate") ls >> cfg.dropout_rate;
      else if (key == "vocab_size") ls >> vocab_size;
      else throw CheckpointError(path + ": unknown meta key '" + key + "'");
      if (!ls) throw CheckpointError(path + ": malformed meta line: " + line);
    } else if (tag == "tensor") {
      std::string name;
      long rows = 0, cols = 0;
      ls >> name >> rows >> cols;
      if (!ls) throw CheckpointError(path + ": malformed tensor line: " + line);
      tensors.emplace_back(name, std::pair{rows, cols});
    } else {
      throw CheckpointError(path + ": unexpected header line: " + line);
    }
  }
  if (vocab_size != vocab.size()) {
    throw CheckpointError(path + ": checkpoint vocab_size " + std::to_string(vocab_size) +
                          " does not match vocabulary of " + std::to_string(vocab.size()) +
                          " tokens");
  }
  BmrcModel model(cfg, vocab);
  auto params = model.params();
  if (params.size() != tensors.size()) {
    throw CheckpointError(path + ": checkpoint lists " + std::to_string(tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (size_t t = 0; t < params.size(); ++t) {
    const auto& [name, shape] = tensors[t];
    Eigen::MatrixXd& m = params[t].param->v;
    if (name != params[t].name || shape.first != m.rows() || shape.second != m.cols()) {
      throw CheckpointError(path + ": tensor " + std::to_string(t) + " is '" + name + "' [" +
                            std::to_string(shape.first) + "x" + std::to_string(shape.second) +
                            "], model expects '" + params[t].name + "' [" +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]");
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), sizeof(f));
        m(i, j) = static_cast<double>(f);
      }
    }
  }
  if (!in) throw CheckpointError(path + ": truncated checkpoint data section");
  return model;
}

}  // namespace bmrc
