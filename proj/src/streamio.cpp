#include "tcrl/streamio.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace tcrl {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host expected");

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void i64(std::int64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void tag(const char (&t)[5]) { bytes(t, 4); }
    void reserve(std::size_t n) { buf_.reserve(n); }
    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const std::string& data, ErrorKind truncation, std::string what)
        : data_(data), kind_(truncation), what_(std::move(what)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

    void need(std::size_t n) const {
        if (remaining() < n)
            fail(kind_, what_ + " truncated at byte offset " + std::to_string(pos_) + " (needed " +
                            std::to_string(n) + " more bytes, " + std::to_string(remaining()) + " left)");
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    template <class T>
    T get() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
    ErrorKind kind_;
    std::string what_;
};

void put_matrix(ByteWriter& w, const Matrix& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Matrix get_matrix(ByteReader& r) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    const std::size_t bytes = static_cast<std::size_t>(rows) * cols * sizeof(double);
    r.need(bytes);
    Matrix m(rows, cols);
    r.bytes(m.data(), bytes);
    return m;
}

}  // namespace

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorKind::Io, "read error on '" + path.string() + "'");
    return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            fail(ErrorKind::Io, "write error on '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(ErrorKind::Io, "cannot move output into place at '" + path.string() + "'");
    }
}

std::uint64_t write_stream(const SeriesBatch& batch, const fs::path& path) {
    ByteWriter w;
    w.reserve(kStreamHeaderBytes + batch.size() * kRecordHeaderBytes + batch.total_rows() * batch.dim() * 4);
    w.tag("ACTS");
    w.u32(kStreamVersion);
    w.u32(static_cast<std::uint32_t>(batch.dim()));
    w.u8(0);
    const char zeros[3] = {0, 0, 0};
    w.bytes(zeros, 3);
    std::vector<float> row(batch.dim());
    for (const auto& s : batch.sequences()) {
        require(s.rows.cols() == batch.dim(), "sequence dimension does not match batch");
        require(s.rows.rows() >= 1, "stream records need at least one row");
        w.u64(s.seq_id);
        w.u32(static_cast<std::uint32_t>(s.rows.rows()));
        for (Eigen::Index t = 0; t < s.rows.rows(); ++t) {
            for (int j = 0; j < batch.dim(); ++j) row[j] = static_cast<float>(s.rows(t, j));
            w.bytes(row.data(), row.size() * sizeof(float));
        }
    }
    write_file_atomic(path, w.str());
    return w.str().size();
}

namespace {

std::uint32_t read_stream_header(ByteReader& r) {
    if (r.remaining() < 4 || r.text(4) != "ACTS") fail(ErrorKind::FormatError, "bad magic: not an activation stream");
    r.need(kStreamHeaderBytes - 4);
    const auto version = r.get<std::uint32_t>();
    if (version != kStreamVersion) fail(ErrorKind::FormatError, "unsupported stream version " + std::to_string(version));
    const auto dim = r.get<std::uint32_t>();
    const auto dtype = r.get<std::uint8_t>();
    std::uint8_t reserved[3];
    r.bytes(reserved, 3);
    if (dtype != 0) fail(ErrorKind::FormatError, "unsupported dtype " + std::to_string(dtype));
    if (dim == 0) fail(ErrorKind::FormatError, "stream dim must be positive");
    if (reserved[0] || reserved[1] || reserved[2]) fail(ErrorKind::FormatError, "reserved header bytes are not zero");
    return dim;
}

template <class F>
void for_each_record(ByteReader& r, std::uint32_t dim, F&& f) {
    while (!r.done()) {
        const std::size_t at = r.offset();
        r.need(kRecordHeaderBytes);
        const auto seq_id = r.get<std::uint64_t>();
        const auto length = r.get<std::uint32_t>();
        if (length == 0) fail(ErrorKind::CorruptStream, "zero-length record at byte offset " + std::to_string(at));
        const std::size_t bytes = static_cast<std::size_t>(length) * dim * sizeof(float);
        r.need(bytes);
        f(seq_id, length);
    }
}

}  // namespace

SeriesBatch read_stream(const fs::path& path, SeriesKind kind) {
    const std::string data = read_file(path);
    ByteReader r(data, ErrorKind::CorruptStream, "stream");
    const auto dim = read_stream_header(r);
    SeriesBatch batch(static_cast<int>(dim), kind);
    std::vector<float> buf;
    for_each_record(r, dim, [&](std::uint64_t seq_id, std::uint32_t length) {
        buf.resize(static_cast<std::size_t>(length) * dim);
        r.bytes(buf.data(), buf.size() * sizeof(float));
        Matrix rows(length, dim);
        for (std::size_t k = 0; k < buf.size(); ++k) rows.data()[k] = static_cast<double>(buf[k]);
        batch.add({seq_id, std::move(rows)});
    });
    return batch;
}

StreamSummary inspect_stream(const fs::path& path) {
    const std::string data = read_file(path);
    ByteReader r(data, ErrorKind::CorruptStream, "stream");
    StreamSummary s;
    s.dim = read_stream_header(r);
    std::vector<float> buf;
    for_each_record(r, s.dim, [&](std::uint64_t, std::uint32_t length) {
        buf.resize(static_cast<std::size_t>(length) * s.dim);
        r.bytes(buf.data(), buf.size() * sizeof(float));
        for (float v : buf) s.finite = s.finite && std::isfinite(v);
        s.sequences += 1;
        s.rows += length;
    });
    return s;
}

void write_sidecar(const GroundTruthSystem& sys, const fs::path& path) {
    ByteWriter w;
    w.tag("TCGS");
    w.u32(kSidecarVersion);
    w.u32(static_cast<std::uint32_t>(sys.lags()));
    w.u32(0);
    w.tag("MIXA");
    put_matrix(w, sys.mixing());
    for (const auto& b : sys.lag_stack()) {
        w.tag("LAGB");
        put_matrix(w, b);
    }
    w.tag("INST");
    put_matrix(w, sys.instantaneous());
    w.tag("NOIS");
    Matrix noise(1, 1);
    noise(0, 0) = sys.noise_scale();
    put_matrix(w, noise);
    write_file_atomic(path, w.str());
}

GroundTruthSystem read_sidecar(const fs::path& path) {
    const std::string data = read_file(path);
    ByteReader r(data, ErrorKind::CorruptSidecar, "sidecar");
    if (r.remaining() < 4 || r.text(4) != "TCGS") fail(ErrorKind::FormatError, "bad magic: not a ground-truth sidecar");
    r.need(12);
    const auto version = r.get<std::uint32_t>();
    if (version != kSidecarVersion) fail(ErrorKind::FormatError, "unsupported sidecar version " + std::to_string(version));
    const auto lags = r.get<std::uint32_t>();
    r.get<std::uint32_t>();
    std::optional<Matrix> mix, inst;
    std::optional<double> noise;
    std::vector<Matrix> stack;
    while (!r.done()) {
        const std::string tag = r.text(4);
        Matrix m = get_matrix(r);
        if (tag == "MIXA") mix = std::move(m);
        else if (tag == "LAGB") stack.push_back(std::move(m));
        else if (tag == "INST") inst = std::move(m);
        else if (tag == "NOIS") {
            if (m.size() != 1) fail(ErrorKind::CorruptSidecar, "noise block must be 1 x 1");
            noise = m(0, 0);
        } else fail(ErrorKind::CorruptSidecar, "unknown block tag '" + tag + "'");
    }
    if (!mix) fail(ErrorKind::CorruptSidecar, "missing mixing block");
    if (!inst) fail(ErrorKind::CorruptSidecar, "missing instantaneous (M) block");
    if (!noise) fail(ErrorKind::CorruptSidecar, "missing noise block");
    if (stack.size() != lags)
        fail(ErrorKind::CorruptSidecar, "header declares " + std::to_string(lags) + " lag blocks, found " +
                                            std::to_string(stack.size()));
    try {
        return GroundTruthSystem(std::move(*mix), std::move(stack), std::move(*inst), *noise);
    } catch (const Error& e) {
        fail(ErrorKind::CorruptSidecar, e.what());
    }
}

void write_checkpoint(const ModelParams& p, const AdamState* adam, const fs::path& path) {
    p.validate();
    const auto names = tensor_names(p);
    std::vector<const Matrix*> tensors{&p.enc, &p.dec};
    for (const auto& b : p.b_hat) tensors.push_back(&b);
    tensors.push_back(&p.m_hat);
    Matrix eb, db;
    if (p.has_bias()) {
        eb = p.enc_bias.transpose();
        db = p.dec_bias.transpose();
        tensors.push_back(&eb);
        tensors.push_back(&db);
    }
    if (adam) require(adam->first_moment.size() == names.size(), "optimizer state does not match the parameters");

    ByteWriter w;
    w.tag("TCKP");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(p.topk));
    w.u32(static_cast<std::uint32_t>(names.size() * (adam ? 3 : 1)));
    w.i64(adam ? adam->step_count : 0);
    w.f64(adam ? adam->beta1 : 0.9);
    w.f64(adam ? adam->beta2 : 0.999);
    w.f64(adam ? adam->eps : 1e-8);
    auto put = [&](const std::string& name, const Matrix& m) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        put_matrix(w, m);
    };
    for (std::size_t k = 0; k < names.size(); ++k) put(names[k], *tensors[k]);
    if (adam) {
        for (std::size_t k = 0; k < names.size(); ++k) put("adam.m." + names[k], adam->first_moment[k]);
        for (std::size_t k = 0; k < names.size(); ++k) put("adam.v." + names[k], adam->second_moment[k]);
    }
    write_file_atomic(path, w.str());
}

Checkpoint read_checkpoint(const fs::path& path) {
    const std::string data = read_file(path);
    ByteReader r(data, ErrorKind::FormatError, "checkpoint");
    if (r.remaining() < 4 || r.text(4) != "TCKP") fail(ErrorKind::FormatError, "bad magic: not a checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) fail(ErrorKind::FormatError, "unsupported checkpoint version " + std::to_string(version));
    const auto topk = r.get<std::uint32_t>();
    const auto count = r.get<std::uint32_t>();
    const auto step = r.get<std::int64_t>();
    const auto b1 = r.get<double>();
    const auto b2 = r.get<double>();
    const auto eps = r.get<double>();
    std::map<std::string, Matrix> t;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = r.get<std::uint32_t>();
        std::string name = r.text(len);
        t[std::move(name)] = get_matrix(r);
    }
    if (!r.done()) fail(ErrorKind::FormatError, "trailing bytes after the last tensor");
    auto take = [&](const std::string& name) -> Matrix {
        auto it = t.find(name);
        if (it == t.end()) fail(ErrorKind::FormatError, "checkpoint is missing tensor '" + name + "'");
        return it->second;
    };
    Checkpoint ck;
    ModelParams& p = ck.params;
    p.enc = take("enc");
    p.dec = take("dec");
    for (int tau = 1; t.count("b_hat." + std::to_string(tau)); ++tau) p.b_hat.push_back(take("b_hat." + std::to_string(tau)));
    p.m_hat = take("m_hat");
    if (t.count("enc_bias")) {
        p.enc_bias = take("enc_bias").transpose();
        p.dec_bias = take("dec_bias").transpose();
    }
    p.topk = static_cast<int>(topk);
    try {
        p.validate();
    } catch (const Error& e) {
        fail(ErrorKind::FormatError, std::string("inconsistent checkpoint: ") + e.what());
    }
    const auto names = tensor_names(p);
    if (t.count("adam.m." + names[0])) {
        AdamState a;
        a.step_count = step;
        a.beta1 = b1;
        a.beta2 = b2;
        a.eps = eps;
        for (const auto& nm : names) a.first_moment.push_back(take("adam.m." + nm));
        for (const auto& nm : names) a.second_moment.push_back(take("adam.v." + nm));
        ck.adam = std::move(a);
    }
    return ck;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_loss_csv(const std::vector<LossRecord>& curve, const fs::path& path) {
    std::string out = "step,recon,noise,sparsity_b,sparsity_m,total\n";
    for (const auto& rec : curve) {
        out += std::to_string(rec.step);
        for (double v : {rec.losses.recon, rec.losses.noise, rec.losses.sparsity_b, rec.losses.sparsity_m,
                         rec.losses.total}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "step,recon,noise,sparsity_b,sparsity_m,total")
        fail(ErrorKind::FormatError, "unexpected loss CSV header");
    std::vector<LossRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double v[6];
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int k = 0; k < 6; ++k) {
            const auto res = std::from_chars(p, end, v[k]);
            if (res.ec != std::errc()) fail(ErrorKind::FormatError, "malformed loss CSV row: " + line);
            p = res.ptr;
            if (k < 5) {
                if (p == end || *p != ',') fail(ErrorKind::FormatError, "malformed loss CSV row: " + line);
                ++p;
            }
        }
        out.push_back({static_cast<std::int64_t>(v[0]), {v[1], v[2], v[3], v[4], v[5]}});
    }
    return out;
}

}  // namespace tcrl
