#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bifleet/tensor.hpp"

namespace bifleet {

// Handle into the active tape.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Named trainable tensors plus their gradient buffers. The tape accumulates
// into `grad` on backward; the optimizer consumes and zeroes it.
class ParamStore {
 public:
  struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  int add(const std::string& name, Tensor init, bool trainable = true);
  Param& at(int id) { return params_[static_cast<size_t>(id)]; }
  const Param& at(int id) const { return params_[static_cast<size_t>(id)]; }
  int find(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(params_.size()); }

  void zero_grads();
  // Sum of squared values over trainable parameters.
  double squared_norm() const;
  int64_t trainable_count() const;
  bool all_finite() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> by_name_;
};

// Define-by-run reverse-mode gradient tape. A tape is built for one forward
// pass (one training step) and discarded; nodes are recorded in topological
// order by construction. Single-threaded per tape.
//
// Convention: vectors are rank-1, matrices rank-2 row-major. Elementwise ops
// require identical shapes except that a 1-element tensor broadcasts against
// anything ("scalar broadcast"); all other coercions must be explicit.
class Tape {
 public:
  explicit Tape(ParamStore* params = nullptr) : params_(params) {}

  // --- leaves ---
  Var input(Tensor value);        // constant; receives a gradient but binds nowhere
  Var param(int param_id);        // bound leaf; backward() adds into the store's grad

  // --- ops ---
  Var matmul(Var a, Var b);                    // [m,k]x[k,n] -> [m,n]
  Var matvec(Var m, Var v);                    // [r,c]x[c] -> [r]
  Var vecmat(Var v, Var m);                    // [r]x[r,c] -> [c]
  Var dot(Var a, Var b);                       // [n]x[n] -> [1]
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var sigmoid(Var a);
  Var tanh_op(Var a);
  Var relu(Var a);
  Var exp_op(Var a);
  Var log_op(Var a);
  Var softmax(Var v);                          // stable, flat over all entries
  Var logsumexp(Var v);                        // -> [1]
  Var sum(Var a);                              // -> [1]
  Var mean(Var a);                             // -> [1]
  Var concat(Var a, Var b);                    // rank-1 ++ rank-1
  Var slice(Var v, int64_t start, int64_t len);          // rank-1
  Var row(Var m, int64_t r);                   // matrix row as a vector
  Var stack_rows(const std::vector<Var>& rows);          // m x [n] -> [m,n]
  Var gather_rows(Var m, std::vector<int64_t> idx);      // -> [|idx|, c]
  Var scale_columns(Var m, Var v);             // out[i][j] = m[i][j]*v[j]
  Var add_rowvec(Var m, Var v);                // out[i][j] = m[i][j]+v[j]
  Var max_over_rows(Var m);                    // column-wise max -> [c]
  Var l2norm_rows(Var m);                      // unit-normalize rows; zero rows pass through
  Var im2col_rows(Var m, int width);           // zero-padded sliding windows, stride 1

  // Negative log-likelihood of `labels` under a linear-chain CRF
  // (emissions [m,L], transitions [L,L] scored from->to, start/stop [L]).
  // Forward algorithm inside; analytic backward via forward-backward marginals.
  Var crf_nll(Var emissions, Var transitions, Var start, Var stop,
              const std::vector<int>& labels);

  // Structured hinge with Hamming cost: max(0, score(y*)+Δ(y*,gold)-score(gold))
  // where y* maximizes the loss-augmented score. Subgradient backward.
  Var crf_hinge(Var emissions, Var transitions, Var start, Var stop,
                const std::vector<int>& labels);

  // Multiclass hinge on a score vector: max(0, max_{k!=gold}(s_k+1) - s_gold).
  Var hinge_multiclass(Var scores, int gold);

  // --- execution ---
  const Tensor& val(Var v) const;  // invalidated by the next op; copy to hold
  void backward(Var loss);         // loss must be [1]
  const Tensor& grad(Var v) const; // valid after backward()
  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&, int)> back;  // (tape, node id)
    int param_id = -1;
  };

  Var emit(Tensor value, std::function<void(Tape&, int)> back);
  Tensor& grad_buf(int id);
  void touch(int id) { touched_[static_cast<size_t>(id)] = true; }
  void check(Var v) const;

  ParamStore* params_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> touched_;
  std::unordered_map<int, int32_t> bound_params_;
};

// Greedy best-path decode for the same CRF parameterization as Tape::crf_nll.
// Ties break toward the lowest label id. Value-level: not recorded on a tape.
std::vector<int> crf_viterbi(const Tensor& emissions, const Tensor& transitions,
                             const Tensor& start, const Tensor& stop);

}  // namespace bifleet
