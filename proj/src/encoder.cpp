#include "bifleet/encoder.hpp"

#include <cmath>

#include "bifleet/common.hpp"

namespace bifleet {

const char* task_name(Task t) { return t == Task::kCC ? "cc" : "cee"; }

Tensor glorot_uniform(int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (auto& v : t.flat()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor uniform_init(std::vector<int64_t> shape, double radius, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.flat()) v = rng.uniform(-radius, radius);
  return t;
}

namespace {
std::string lstm_name(Domain d, Task t, int direction, const char* part) {
  return cat("encoder.lstm.", domain_name(d), ".", task_name(t), ".",
             direction == 0 ? "fwd" : "bwd", ".", part);
}
}  // namespace

ContextEncoder ContextEncoder::create(ParamStore& store, const Vocabulary& vocab,
                                      const EncoderDims& dims, Rng& rng) {
  if (dims.cnn_width < 1 || dims.cnn_width % 2 == 0) {
    throw ConfigError("cnn_width must be odd");
  }
  ContextEncoder enc;
  enc.dims_ = dims;
  enc.word_emb_ = store.add("encoder.word_embedding",
                            uniform_init({vocab.word_count(), dims.word_dim}, 0.1, rng));
  enc.char_emb_ = store.add("encoder.char_embedding",
                            uniform_init({vocab.char_count(), dims.char_dim}, 0.1, rng));
  enc.cnn_filter_ = store.add("encoder.cnn_filter",
                              glorot_uniform(dims.cnn_width * dims.char_dim, dims.cnn_filters, rng));
  enc.cnn_bias_ = store.add("encoder.cnn_bias", Tensor::zeros({dims.cnn_filters}));

  const int h = dims.hidden_dim;
  for (int d = 0; d < 2; ++d) {
    for (int t = 0; t < 2; ++t) {
      for (int dir = 0; dir < 2; ++dir) {
        Domain dom = d == 0 ? Domain::kSource : Domain::kTarget;
        Task task = t == 0 ? Task::kCC : Task::kCEE;
        Tensor bias = Tensor::zeros({4 * h});
        for (int i = h; i < 2 * h; ++i) bias[i] = 1.0;  // forget gate
        enc.lstm_[d][t][dir].wx = store.add(lstm_name(dom, task, dir, "wx"),
                                            glorot_uniform(dims.input_dim(), 4 * h, rng));
        enc.lstm_[d][t][dir].wh =
            store.add(lstm_name(dom, task, dir, "wh"), glorot_uniform(h, 4 * h, rng));
        enc.lstm_[d][t][dir].b = store.add(lstm_name(dom, task, dir, "b"), std::move(bias));
      }
    }
  }
  return enc;
}

ContextEncoder ContextEncoder::attach(const ParamStore& store, const EncoderDims& dims) {
  ContextEncoder enc;
  enc.dims_ = dims;
  auto need = [&store](const std::string& name) {
    int id = store.find(name);
    if (id < 0) throw ContractViolation("checkpoint lacks parameter: " + name);
    return id;
  };
  enc.word_emb_ = need("encoder.word_embedding");
  enc.char_emb_ = need("encoder.char_embedding");
  enc.cnn_filter_ = need("encoder.cnn_filter");
  enc.cnn_bias_ = need("encoder.cnn_bias");
  for (int d = 0; d < 2; ++d) {
    for (int t = 0; t < 2; ++t) {
      for (int dir = 0; dir < 2; ++dir) {
        Domain dom = d == 0 ? Domain::kSource : Domain::kTarget;
        Task task = t == 0 ? Task::kCC : Task::kCEE;
        enc.lstm_[d][t][dir].wx = need(lstm_name(dom, task, dir, "wx"));
        enc.lstm_[d][t][dir].wh = need(lstm_name(dom, task, dir, "wh"));
        enc.lstm_[d][t][dir].b = need(lstm_name(dom, task, dir, "b"));
      }
    }
  }
  return enc;
}

const ContextEncoder::LstmDir& ContextEncoder::lstm_dir(Domain d, Task t, int direction) const {
  return lstm_[d == Domain::kTarget ? 1 : 0][t == Task::kCEE ? 1 : 0][direction];
}

std::vector<Var> ContextEncoder::embed_tokens(Tape& tape, const Sentence& sentence,
                                              const Vocabulary& vocab) const {
  if (sentence.tokens.empty()) throw ContractViolation("embed_tokens on empty sentence");
  Var word_table = tape.param(word_emb_);
  Var char_table = tape.param(char_emb_);
  Var filter = tape.param(cnn_filter_);
  Var cnn_bias = tape.param(cnn_bias_);

  std::vector<int64_t> word_ids;
  word_ids.reserve(sentence.tokens.size());
  for (const auto& token : sentence.tokens) {
    word_ids.push_back(vocab.word_id(token));
  }
  Var word_rows = tape.gather_rows(word_table, word_ids);

  std::vector<Var> out;
  out.reserve(sentence.tokens.size());
  for (size_t i = 0; i < sentence.tokens.size(); ++i) {
    const std::string& token = sentence.tokens[i];
    std::vector<int64_t> char_ids;
    char_ids.reserve(token.size());
    for (char c : token) char_ids.push_back(vocab.char_id(c));
    if (char_ids.empty()) char_ids.push_back(Vocabulary::kUnk);

    Var chars = tape.gather_rows(char_table, char_ids);      // [len, char_dim]
    Var windows = tape.im2col_rows(chars, dims_.cnn_width);  // [len, width*char_dim]
    Var conv = tape.add_rowvec(tape.matmul(windows, filter), cnn_bias);
    Var pooled = tape.max_over_rows(tape.relu(conv));        // [cnn_filters]
    out.push_back(tape.concat(tape.row(word_rows, static_cast<int64_t>(i)), pooled));
  }
  return out;
}

Var ContextEncoder::lstm_pass(Tape& tape, const std::vector<Var>& inputs, const LstmDir& dir,
                              bool reversed, std::vector<Var>& states) const {
  const int h = dims_.hidden_dim;
  Var wx = tape.param(dir.wx);
  Var wh = tape.param(dir.wh);
  Var b = tape.param(dir.b);
  Var hidden = tape.input(Tensor::zeros({h}));
  Var cell = tape.input(Tensor::zeros({h}));
  const int m = static_cast<int>(inputs.size());
  states.assign(static_cast<size_t>(m), Var{});
  for (int step = 0; step < m; ++step) {
    const int idx = reversed ? m - 1 - step : step;
    Var z = tape.add(tape.add(tape.vecmat(inputs[static_cast<size_t>(idx)], wx),
                              tape.vecmat(hidden, wh)),
                     b);
    Var in_gate = tape.sigmoid(tape.slice(z, 0, h));
    Var forget = tape.sigmoid(tape.slice(z, h, h));
    Var cand = tape.tanh_op(tape.slice(z, 2 * h, h));
    Var out_gate = tape.sigmoid(tape.slice(z, 3 * h, h));
    cell = tape.add(tape.mul(forget, cell), tape.mul(in_gate, cand));
    hidden = tape.mul(out_gate, tape.tanh_op(cell));
    states[static_cast<size_t>(idx)] = hidden;
  }
  return hidden;
}

std::vector<Var> ContextEncoder::encode_sequence(Tape& tape, const std::vector<Var>& inputs,
                                                 Domain domain, Task task) const {
  if (inputs.empty()) throw ContractViolation("encode_sequence on empty input");
  std::vector<Var> fwd, bwd;
  lstm_pass(tape, inputs, lstm_dir(domain, task, 0), false, fwd);
  lstm_pass(tape, inputs, lstm_dir(domain, task, 1), true, bwd);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    out.push_back(tape.concat(fwd[i], bwd[i]));
  }
  return out;
}

}  // namespace bifleet
