#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "via/tensor.hpp"

namespace via {

// Adaptive moment estimation over named parameter tensors. Moment slots are
// keyed by parameter name so they survive checkpointing.
template <typename S>
class Adam {
  public:
    struct Hyper {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    explicit Adam(Hyper h) : h_(h) {}

    int step_count() const { return t_; }
    void set_step_count(int t) { t_ = t; }
    const Hyper& hyper() const { return h_; }

    struct Update {
        std::string name;
        Tensor<S>* param;
        const Tensor<S>* grad;
    };

    void step(const std::vector<Update>& updates) {
        ++t_;
        const S b1 = static_cast<S>(h_.beta1), b2 = static_cast<S>(h_.beta2);
        const S corr1 = static_cast<S>(1.0 - std::pow(h_.beta1, t_));
        const S corr2 = static_cast<S>(1.0 - std::pow(h_.beta2, t_));
        const S lr = static_cast<S>(h_.lr), eps = static_cast<S>(h_.eps);
        for (const Update& u : updates) {
            auto& slot = slots_[u.name];
            if (slot.m.data.empty()) {
                slot.m = Tensor<S>::zeros(u.param->shape);
                slot.v = Tensor<S>::zeros(u.param->shape);
            }
            for (std::size_t i = 0; i < u.param->size(); ++i) {
                const S g = u.grad->data[i];
                slot.m.data[i] = b1 * slot.m.data[i] + (S(1) - b1) * g;
                slot.v.data[i] = b2 * slot.v.data[i] + (S(1) - b2) * g * g;
                const S mhat = slot.m.data[i] / corr1;
                const S vhat = slot.v.data[i] / corr2;
                u.param->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    template <typename F>
    void visit_moments(F&& f) {
        for (auto& [name, slot] : slots_) {
            f("opt/m/" + name, slot.m);
            f("opt/v/" + name, slot.v);
        }
    }

    void restore_moment(const std::string& slot_name, const Tensor<S>& value) {
        if (slot_name.rfind("opt/m/", 0) == 0)
            slots_[slot_name.substr(6)].m = value;
        else if (slot_name.rfind("opt/v/", 0) == 0)
            slots_[slot_name.substr(6)].v = value;
        else
            throw std::invalid_argument("not an optimizer moment: " + slot_name);
    }

  private:
    struct Slot {
        Tensor<S> m, v;
    };
    Hyper h_;
    int t_ = 0;
    std::map<std::string, Slot> slots_;  // ordered for deterministic iteration
};

}  // namespace via
