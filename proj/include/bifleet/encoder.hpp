#pragma once

#include <string>
#include <vector>

#include "bifleet/corpus.hpp"
#include "bifleet/rng.hpp"
#include "bifleet/tape.hpp"
#include "bifleet/vocab.hpp"

namespace bifleet {

enum class Task { kCC, kCEE };
const char* task_name(Task t);

struct EncoderDims {
  int word_dim = 50;     // word embedding width
  int char_dim = 16;     // char embedding width
  int cnn_filters = 32;  // char-CNN feature maps
  int cnn_width = 3;     // convolution window (odd)
  int hidden_dim = 100;  // LSTM hidden size per direction

  int input_dim() const { return word_dim + cnn_filters; }
  int output_dim() const { return 2 * hidden_dim; }
};

// Token embedding (shared word table + shared char CNN) and the bank of four
// domain/task-specific Bi-LSTMs. Parameters live in the given store; the
// encoder itself only remembers their ids.
class ContextEncoder {
 public:
  // Creates fresh parameters. Embeddings start uniform(-0.1, 0.1), weight
  // matrices Glorot-uniform, biases zero except the LSTM forget gate at 1.
  static ContextEncoder create(ParamStore& store, const Vocabulary& vocab,
                               const EncoderDims& dims, Rng& rng);
  // Rebinds to parameters already present under the canonical names.
  static ContextEncoder attach(const ParamStore& store, const EncoderDims& dims);

  // One vector of width word_dim + cnn_filters per token (embedding lookup
  // plus max-pooled char convolution).
  std::vector<Var> embed_tokens(Tape& tape, const Sentence& sentence,
                                const Vocabulary& vocab) const;

  // Bi-LSTM hidden states, one [2*hidden_dim] vector per token; forward and
  // backward passes start from zero states at their respective ends.
  std::vector<Var> encode_sequence(Tape& tape, const std::vector<Var>& inputs, Domain domain,
                                   Task task) const;

  const EncoderDims& dims() const { return dims_; }

  // Parameter ids of one LSTM direction (combined gate layout [i|f|g|o]).
  struct LstmDir {
    int wx = -1;  // [input_dim, 4*hidden]
    int wh = -1;  // [hidden, 4*hidden]
    int b = -1;   // [4*hidden]
  };
  const LstmDir& lstm_dir(Domain d, Task t, int direction) const;

  int word_embedding_id() const { return word_emb_; }
  int char_embedding_id() const { return char_emb_; }
  int cnn_filter_id() const { return cnn_filter_; }
  int cnn_bias_id() const { return cnn_bias_; }

 private:
  EncoderDims dims_;
  int word_emb_ = -1;
  int char_emb_ = -1;
  int cnn_filter_ = -1;  // [cnn_width*char_dim, cnn_filters]
  int cnn_bias_ = -1;    // [cnn_filters]
  LstmDir lstm_[2][2][2];  // [domain][task][direction: 0 fwd, 1 bwd]

  Var lstm_pass(Tape& tape, const std::vector<Var>& inputs, const LstmDir& dir, bool reversed,
                std::vector<Var>& states) const;
};

// Glorot-uniform initialization for a [fan_in, fan_out] matrix.
Tensor glorot_uniform(int64_t fan_in, int64_t fan_out, Rng& rng);
Tensor uniform_init(std::vector<int64_t> shape, double radius, Rng& rng);

}  // namespace bifleet
