#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "loraflow/tensor.hpp"

namespace loraflow {

/// Flat named-tensor store for all trainable parameters plus their Adam
/// moments. Names are unique and shapes are fixed after registration; the
/// ordered map gives a deterministic iteration order everywhere (updates,
/// checkpoints, dead-parameter scans).
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor m;
        Tensor v;
    };

    void add(const std::string& name, Tensor init) {
        if (entries_.count(name))
            throw std::invalid_argument("duplicate parameter name: " + name);
        Entry e;
        e.grad = Tensor(init.shape);
        e.m = Tensor(init.shape);
        e.v = Tensor(init.shape);
        e.value = std::move(init);
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw std::invalid_argument("unknown parameter: " + name);
        return it->second;
    }

    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw std::invalid_argument("unknown parameter: " + name);
        return it->second;
    }

    Tensor& value(const std::string& name) { return entry(name).value; }
    const Tensor& value(const std::string& name) const { return entry(name).value; }
    Tensor& grad(const std::string& name) { return entry(name).grad; }

    void erase(const std::string& name) { entries_.erase(name); }

    void zero_grads() {
        for (auto& [name, e] : entries_)
            std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, e] : entries_) n += e.value.numel();
        return n;
    }

    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, Entry> entries_;
};

}  // namespace loraflow
