#pragma once

#include "mvfbsde/mat.hpp"
#include "mvfbsde/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mvfbsde {

enum class Activation { Tanh, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Fully-connected net with a fixed smooth hidden activation. The solver
/// instantiates {in, 18, 18, out} with tanh; tests use smaller layouts.
class FeedForwardNet {
public:
    FeedForwardNet() = default;
    FeedForwardNet(std::vector<std::size_t> layer_sizes, Activation activation,
                   std::uint64_t seed);

    std::size_t input_dim() const { return sizes_.front(); }
    std::size_t output_dim() const { return sizes_.back(); }
    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    Activation activation() const { return activation_; }

    /// Plain forward pass, x is (batch × input_dim).
    Mat eval(const Mat& x) const;

    struct TapeEval {
        ad::NodeId output = ad::kNoNode;
        ad::NodeId input = ad::kNoNode;
        std::vector<ad::NodeId> params;
    };
    /// Records the forward pass on the tape. Parameter node order matches
    /// params().
    TapeEval forward_on_tape(ad::Tape& tape, const Mat& x, bool input_requires_grad) const;

    std::vector<Mat*> params();
    std::vector<const Mat*> params() const;

    std::vector<Mat>& weights() { return weights_; }
    std::vector<Mat>& biases() { return biases_; }
    const std::vector<Mat>& weights() const { return weights_; }
    const std::vector<Mat>& biases() const { return biases_; }

private:
    std::vector<std::size_t> sizes_;
    Activation activation_ = Activation::Tanh;
    std::vector<Mat> weights_; // layer l: (sizes[l+1] × sizes[l])
    std::vector<Mat> biases_;  // layer l: (1 × sizes[l+1])
};

/// Single GRU layer plus an affine output head. Optional extra features are
/// concatenated to the hidden state before the head. Gate equations follow
/// the standard convention:
///   z = sigmoid(x·Wzᵀ + h·Uzᵀ + bz)
///   r = sigmoid(x·Wrᵀ + h·Urᵀ + br)
///   n = tanh(x·Wnᵀ + bn + r ∘ (h·Unᵀ + bhn))
///   h' = (1 − z) ∘ n + z ∘ h
/// The hidden state starts at zero, so the output at step j is a function of
/// inputs at steps ≤ j only.
class GruNet {
public:
    GruNet() = default;
    GruNet(std::size_t input_dim, std::size_t hidden_dim, std::size_t extra_dim,
           std::size_t output_dim, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden_dim() const { return hidden_dim_; }
    std::size_t extra_dim() const { return extra_dim_; }
    std::size_t output_dim() const { return output_dim_; }

    /// One recurrence step without tape; h and x are (batch × dim).
    Mat step(const Mat& h, const Mat& x) const;
    /// Head output for a hidden state (and extra features when configured).
    Mat head(const Mat& h, const Mat* extra = nullptr) const;

    /// All hidden states for a feature sequence; hidden[j] is the state after
    /// consuming inputs[0..j].
    std::vector<Mat> hidden_sequence(const std::vector<Mat>& inputs) const;
    /// Head outputs at every step; extras (when non-null) must have one entry
    /// per step.
    std::vector<Mat> eval_sequence(const std::vector<Mat>& inputs,
                                   const std::vector<Mat>* extras = nullptr) const;

    struct TapeEval {
        std::vector<ad::NodeId> outputs; // one per step
        std::vector<ad::NodeId> params;
    };
    TapeEval forward_on_tape(ad::Tape& tape, const std::vector<Mat>& inputs,
                             const std::vector<Mat>* extras = nullptr) const;

    std::vector<Mat*> params();
    std::vector<const Mat*> params() const;

    Mat wz, uz, bz;
    Mat wr, ur, br;
    Mat wn, bn, un, bhn;
    Mat wo, bo;

private:
    std::size_t input_dim_ = 0, hidden_dim_ = 0, extra_dim_ = 0, output_dim_ = 0;
};

struct AdamConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay = 0.9997;
    std::uint64_t decay_every = 5;
};

/// Adam with stepwise learning-rate decay: the effective rate after k
/// completed updates is lr · decay^⌊k/decay_every⌋, non-increasing in k.
class AdamState {
public:
    AdamState() = default;
    AdamState(const std::vector<const Mat*>& params, AdamConfig cfg);

    double effective_lr() const;
    std::uint64_t steps() const { return steps_; }
    const AdamConfig& config() const { return cfg_; }

    /// Applies one update in place. If any gradient entry is non-finite the
    /// update is aborted, parameters and moments are left untouched, and a
    /// TrainingError is thrown.
    void update(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads);

private:
    AdamConfig cfg_;
    std::vector<Mat> m_, v_;
    std::uint64_t steps_ = 0;
};

} // namespace mvfbsde
