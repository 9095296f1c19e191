#include "tcrl/windows.hpp"

namespace tcrl {

std::size_t window_count(const SeriesBatch& batch, int tau_max) {
    require(tau_max >= 1, "tau_max must be >= 1");
    std::size_t total = 0;
    for (const auto& s : batch.sequences())
        if (s.rows.rows() > tau_max) total += static_cast<std::size_t>(s.rows.rows() - tau_max);
    return total;
}

std::vector<WindowRef> enumerate_windows(const SeriesBatch& batch, int tau_max) {
    std::vector<WindowRef> refs;
    refs.reserve(window_count(batch, tau_max));
    const auto& seqs = batch.sequences();
    for (std::size_t k = 0; k < seqs.size(); ++k)
        for (Eigen::Index t = tau_max; t < seqs[k].rows.rows(); ++t)
            refs.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(t)});
    return refs;
}

Window make_window(const SeriesBatch& batch, WindowRef ref, int tau_max) {
    require(tau_max >= 1, "tau_max must be >= 1");
    require(ref.seq < batch.size(), "window sequence index out of range");
    const Matrix& rows = batch.sequences()[ref.seq].rows;
    require(ref.t >= static_cast<std::uint32_t>(tau_max) && ref.t < rows.rows(),
            "window lacks a full history inside its sequence");
    return {rows.middleRows(ref.t - tau_max, tau_max), rows.row(ref.t).transpose()};
}

WindowBatch gather(const SeriesBatch& batch, std::span<const WindowRef> refs, int tau_max) {
    require(tau_max >= 1, "tau_max must be >= 1");
    const auto n = static_cast<Eigen::Index>(refs.size());
    const int d = batch.dim();
    WindowBatch wb;
    wb.current.resize(n, d);
    wb.lagged.assign(tau_max, Matrix(n, d));
    const auto& seqs = batch.sequences();
    for (Eigen::Index r = 0; r < n; ++r) {
        const WindowRef ref = refs[r];
        require(ref.seq < seqs.size(), "window sequence index out of range");
        const Matrix& rows = seqs[ref.seq].rows;
        require(ref.t >= static_cast<std::uint32_t>(tau_max) && ref.t < rows.rows(),
                "window lacks a full history inside its sequence");
        wb.current.row(r) = rows.row(ref.t);
        for (int tau = 1; tau <= tau_max; ++tau) wb.lagged[tau - 1].row(r) = rows.row(ref.t - tau);
    }
    return wb;
}

WindowBatch stack_windows(std::span<const Window> windows) {
    require(!windows.empty(), "no windows to stack");
    const auto tau_max = windows.front().history.rows();
    const auto d = windows.front().current.size();
    require(tau_max >= 1, "windows need at least one history row");
    const auto n = static_cast<Eigen::Index>(windows.size());
    WindowBatch wb;
    wb.current.resize(n, d);
    wb.lagged.assign(tau_max, Matrix(n, d));
    for (Eigen::Index r = 0; r < n; ++r) {
        const Window& w = windows[r];
        require(w.history.rows() == tau_max && w.history.cols() == d && w.current.size() == d,
                "windows differ in shape");
        wb.current.row(r) = w.current.transpose();
        for (Eigen::Index tau = 1; tau <= tau_max; ++tau) wb.lagged[tau - 1].row(r) = w.history.row(tau_max - tau);
    }
    return wb;
}

WindowBatch all_windows(const SeriesBatch& batch, int tau_max) {
    const auto refs = enumerate_windows(batch, tau_max);
    return gather(batch, refs, tau_max);
}

WindowRange::iterator::iterator(const SeriesBatch* batch, int tau_max, std::size_t seq)
    : batch_(batch), tau_(tau_max), seq_(seq), t_(tau_max) {
    settle();
}

void WindowRange::iterator::settle() {
    while (seq_ < batch_->size() && t_ >= batch_->sequences()[seq_].rows.rows()) {
        ++seq_;
        t_ = tau_;
    }
    if (seq_ >= batch_->size()) {
        seq_ = batch_->size();
        t_ = tau_;
        return;
    }
    load();
}

void WindowRange::iterator::load() {
    const Matrix& rows = batch_->sequences()[seq_].rows;
    current_.history = rows.middleRows(t_ - tau_, tau_);
    current_.current = rows.row(t_).transpose();
}

WindowRange::iterator& WindowRange::iterator::operator++() {
    ++t_;
    settle();
    return *this;
}

WindowRange::WindowRange(const SeriesBatch& batch, int tau_max) : batch_(&batch), tau_(tau_max) {
    require(tau_max >= 1, "tau_max must be >= 1");
}

WindowRange window_iter(const SeriesBatch& batch, int tau_max) { return WindowRange(batch, tau_max); }

}  // namespace tcrl
