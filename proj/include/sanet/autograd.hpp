// Reverse-mode gradient tape.
//
// Operations record themselves on the tape that is active on the calling
// thread (see TapeScope) whenever at least one operand requires a gradient.
// With no active tape, operations are plain forward computations.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

class Tape {
public:
    struct Record {
        const char* op;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        std::function<void()> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(Record r);
    std::size_t size() const noexcept { return records_.size(); }
    bool consumed() const noexcept { return consumed_; }
    const std::vector<Record>& records() const noexcept { return records_; }

    /// Drops all records so the tape can be reused.
    void reset();

private:
    friend void backward(const Tensor& loss, Tape& tape);
    std::vector<Record> records_;
    bool consumed_ = false;
};

/// Makes `tape` the recording target for this thread until destruction.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape() noexcept;

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient. Throws on a non-scalar loss or a tape that was already consumed.
void backward(const Tensor& loss, Tape& tape);

namespace detail {

/// Output tensor for an op over `inputs`: requires_grad is set when any input
/// requires it and a tape is active.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(const std::vector<Tensor>& inputs);

}  // namespace detail

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central-difference check of a scalar function against the tape gradient.
/// rel err = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|). At most
/// `max_entries` coordinates per tensor are probed (chosen with `seed`);
/// 0 means all.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt,
                           double eps = 1e-5, std::size_t max_entries = 0,
                           std::uint64_t seed = 0);

/// Checks f at x; marks x as requiring a gradient.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace sanet
