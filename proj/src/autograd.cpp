#include "sanet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sanet {

namespace {
thread_local Tape* current_tape = nullptr;
}

void Tape::record(Record r) {
    if (consumed_) throw std::logic_error("recording on a consumed tape; call reset() first");
    records_.push_back(std::move(r));
}

void Tape::reset() {
    records_.clear();
    consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

Tape* active_tape() noexcept { return current_tape; }

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!current_tape) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

bool should_record(const std::vector<Tensor>& inputs) {
    if (!current_tape) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor& t) { return t.requires_grad(); });
}

}  // namespace detail

void backward(const Tensor& loss, Tape& tape) {
    if (loss.numel() != 1)
        throw DimensionError("backward needs a scalar loss, got shape " + loss.shape().str());
    if (tape.consumed_)
        throw std::logic_error("backward called twice on the same tape without reset()");
    tape.consumed_ = true;

    auto& root = loss.impl();
    root.ensure_grad();
    root.grad[0] += 1.0;

    for (auto it = tape.records_.rbegin(); it != tape.records_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not on a path to the loss
        it->backward();
    }
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, double eps,
                           std::size_t max_entries, std::uint64_t seed) {
    for (auto& t : wrt) {
        if (!t.requires_grad()) throw std::invalid_argument("grad_check: tensor does not require grad");
        t.impl().grad.clear();
    }

    Tape tape;
    {
        TapeScope scope(tape);
        Tensor y = f();
        backward(y, tape);
    }

    GradCheckReport report;
    std::mt19937_64 rng(seed);
    for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
        Tensor& t = wrt[ti];
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

        std::vector<std::size_t> idx(t.numel());
        std::iota(idx.begin(), idx.end(), 0);
        if (max_entries && idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries);
            std::sort(idx.begin(), idx.end());
        }

        auto data = t.data();
        for (auto i : idx) {
            const double orig = data[i];
            data[i] = orig + eps;
            const double fp = f().item();
            data[i] = orig - eps;
            const double fm = f().item();
            data[i] = orig;

            const double numeric = (fp - fm) / (2.0 * eps);
            const double rel = std::abs(analytic[i] - numeric) /
                               std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
            ++report.checked;
            if (report.checked == 1 || rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_tensor = ti;
                report.worst_index = i;
                report.worst_analytic = analytic[i];
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    x.set_requires_grad(true);
    return grad_check([&] { return f(x); }, {x}, eps).max_rel_error;
}

}  // namespace sanet
