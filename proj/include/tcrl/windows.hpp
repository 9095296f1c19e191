#pragma once

#include "tcrl/core.hpp"

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <span>
#include <vector>

namespace tcrl {

/// tau_max history rows (ascending time, last row is x_{t-1}) plus x_t.
struct Window {
    Matrix history;
    Vector current;
};

/// Position of a window: sequence index within the batch and time of the
/// current row.
struct WindowRef {
    std::uint32_t seq = 0;
    std::uint32_t t = 0;
};

/// Column-stacked windows. lagged[tau - 1] holds x_{t-tau} for every window
/// (one row per window); current holds x_t.
struct WindowBatch {
    std::vector<Matrix> lagged;
    Matrix current;

    std::size_t size() const noexcept { return static_cast<std::size_t>(current.rows()); }
    int tau_max() const noexcept { return static_cast<int>(lagged.size()); }
    int dim() const noexcept { return static_cast<int>(current.cols()); }
};

/// sum_k max(0, T_k - tau_max).
std::size_t window_count(const SeriesBatch& batch, int tau_max);
std::vector<WindowRef> enumerate_windows(const SeriesBatch& batch, int tau_max);
Window make_window(const SeriesBatch& batch, WindowRef ref, int tau_max);

WindowBatch gather(const SeriesBatch& batch, std::span<const WindowRef> refs, int tau_max);
WindowBatch stack_windows(std::span<const Window> windows);
/// Every window of the batch, in sequence order.
WindowBatch all_windows(const SeriesBatch& batch, int tau_max);

/// Lazy range over the windows of a batch: for each sequence, t = tau_max ..
/// T_k - 1 in order. Never crosses sequence boundaries.
class WindowRange {
public:
    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = Window;
        using difference_type = std::ptrdiff_t;
        using pointer = const Window*;
        using reference = const Window&;

        iterator() = default;
        iterator(const SeriesBatch* batch, int tau_max, std::size_t seq);

        reference operator*() const { return current_; }
        pointer operator->() const { return &current_; }
        iterator& operator++();
        iterator operator++(int) {
            iterator tmp = *this;
            ++*this;
            return tmp;
        }
        WindowRef ref() const { return {static_cast<std::uint32_t>(seq_), static_cast<std::uint32_t>(t_)}; }

        friend bool operator==(const iterator& a, const iterator& b) {
            return a.seq_ == b.seq_ && a.t_ == b.t_;
        }

    private:
        void settle();
        void load();

        const SeriesBatch* batch_ = nullptr;
        int tau_ = 1;
        std::size_t seq_ = 0;
        long t_ = 0;
        Window current_;
    };

    WindowRange(const SeriesBatch& batch, int tau_max);
    iterator begin() const { return iterator(batch_, tau_, 0); }
    iterator end() const { return iterator(batch_, tau_, batch_->size()); }

private:
    const SeriesBatch* batch_;
    int tau_;
};

/// Throws invalid-argument when tau_max < 1.
WindowRange window_iter(const SeriesBatch& batch, int tau_max);

}  // namespace tcrl
