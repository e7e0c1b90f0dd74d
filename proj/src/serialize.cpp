#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "sense/serialize.hpp"

namespace sense {
namespace {

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    }
    ~ByteWriter() = default;

    void magic(const char (&tag)[5]) { out_.write(tag, 4); }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void byte(std::uint8_t v) { raw(&v, sizeof v); }
    void raw(const void* data, std::size_t size) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out_) throw std::runtime_error("short write to " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw std::runtime_error("cannot open " + path);
        data_.resize(static_cast<std::size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(data_.data()), static_cast<std::streamsize>(data_.size()));
        if (static_cast<std::size_t>(in.gcount()) != data_.size()) {
            throw std::runtime_error("short read from " + path);
        }
    }

    std::size_t offset() const { return at_; }
    std::size_t remaining() const { return data_.size() - at_; }

    void expect_magic(const char (&tag)[5]) {
        if (remaining() < 4 || std::memcmp(data_.data() + at_, tag, 4) != 0) {
            throw ParseError(std::string("missing ") + tag + " magic", at_);
        }
        at_ += 4;
    }
    std::uint16_t u16() { return fixed<std::uint16_t>("u16"); }
    std::uint32_t u32() { return fixed<std::uint32_t>("u32"); }
    float f32() { return fixed<float>("f32"); }
    double f64() { return fixed<double>("f64"); }
    std::uint8_t byte() { return fixed<std::uint8_t>("byte"); }
    void expect_end() {
        if (remaining() != 0) throw ParseError("trailing bytes", at_);
    }

private:
    template <typename T>
    T fixed(const char* what) {
        if (remaining() < sizeof(T)) {
            throw ParseError(std::string("truncated ") + what, at_);
        }
        T v;
        std::memcpy(&v, data_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }

    std::vector<std::uint8_t> data_;
    std::size_t at_ = 0;
};

constexpr std::uint32_t kDimCap = 1u << 24;  // refuse absurd headers before allocating

Index checked_dim(std::uint32_t v, const char* what, std::size_t offset) {
    if (v < 1 || v > kDimCap) {
        throw ParseError(std::string("unreasonable ") + what, offset);
    }
    return static_cast<Index>(v);
}

void write_matrix_body(ByteWriter& w, const Eigen::Ref<const Matrix>& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
    }
}

Matrix read_matrix_body(ByteReader& r, Index rows, Index cols) {
    // Refuse to allocate more than the file can possibly back.
    if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) >
        r.remaining() / sizeof(double)) {
        throw ParseError("truncated matrix body", r.offset());
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = r.f64();
    }
    return m;
}

void check_version(std::uint16_t version, std::size_t offset) {
    if (version != 1) throw ParseError("unsupported version", offset);
}

}  // namespace

void write_otcm(const std::string& path, const Eigen::Ref<const Matrix>& cost) {
    ByteWriter w(path);
    w.magic("OTCM");
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(cost.rows()));
    w.u32(static_cast<std::uint32_t>(cost.cols()));
    write_matrix_body(w, cost);
}

Matrix read_otcm(const std::string& path) {
    ByteReader r(path);
    r.expect_magic("OTCM");
    const std::size_t voff = r.offset();
    check_version(r.u16(), voff);
    const std::size_t noff = r.offset();
    const Index n = checked_dim(r.u32(), "row count", noff);
    const std::size_t koff = r.offset();
    const Index k = checked_dim(r.u32(), "column count", koff);
    Matrix m = read_matrix_body(r, n, k);
    r.expect_end();
    return m;
}

void write_otpl(const std::string& path, const Eigen::Ref<const Matrix>& plan,
                std::uint32_t iterations_used, double final_violation) {
    ByteWriter w(path);
    w.magic("OTPL");
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(plan.rows()));
    w.u32(static_cast<std::uint32_t>(plan.cols()));
    write_matrix_body(w, plan);
    w.u32(iterations_used);
    w.f64(final_violation);
}

PlanFile read_otpl(const std::string& path) {
    ByteReader r(path);
    r.expect_magic("OTPL");
    const std::size_t voff = r.offset();
    check_version(r.u16(), voff);
    const std::size_t noff = r.offset();
    const Index n = checked_dim(r.u32(), "row count", noff);
    const std::size_t koff = r.offset();
    const Index k = checked_dim(r.u32(), "column count", koff);
    PlanFile f;
    f.plan = read_matrix_body(r, n, k);
    f.iterations_used = r.u32();
    f.final_violation = r.f64();
    r.expect_end();
    return f;
}

void write_cost_csv(const std::string& path, const Eigen::Ref<const Matrix>& cost) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << cost.rows() << "," << cost.cols() << "\n";
    char buf[40];
    for (Index i = 0; i < cost.rows(); ++i) {
        for (Index j = 0; j < cost.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", cost(i, j));
            out << buf << (j + 1 < cost.cols() ? "," : "\n");
        }
    }
}

Matrix read_cost_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t at = 0;
    auto skip_ws = [&] {
        while (at < text.size() && (text[at] == ' ' || text[at] == '\t' || text[at] == '\r' ||
                                    text[at] == '\n')) {
            ++at;
        }
    };
    auto parse_int = [&](const char* what) {
        skip_ws();
        long v = 0;
        const auto [ptr, ec] = std::from_chars(text.data() + at, text.data() + text.size(), v);
        if (ec != std::errc() || v < 1) throw ParseError(std::string("expected ") + what, at);
        at = static_cast<std::size_t>(ptr - text.data());
        return static_cast<Index>(v);
    };
    auto expect_comma = [&] {
        skip_ws();
        if (at >= text.size() || text[at] != ',') throw ParseError("expected ','", at);
        ++at;
    };
    auto parse_value = [&] {
        skip_ws();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data() + at, text.data() + text.size(), v);
        if (ec != std::errc()) throw ParseError("expected a number", at);
        at = static_cast<std::size_t>(ptr - text.data());
        return v;
    };

    const Index n = parse_int("row count");
    expect_comma();
    const Index k = parse_int("column count");
    if (n > static_cast<Index>(kDimCap) || k > static_cast<Index>(kDimCap)) {
        throw ParseError("unreasonable dimensions", 0);
    }
    Matrix m(n, k);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < k; ++j) {
            if (j > 0) expect_comma();
            m(i, j) = parse_value();
        }
    }
    skip_ws();
    if (at != text.size()) throw ParseError("trailing characters", at);
    return m;
}

Matrix read_cost_any(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char head[4] = {0, 0, 0, 0};
    in.read(head, 4);
    in.close();
    if (std::memcmp(head, "OTCM", 4) == 0) return read_otcm(path);
    return read_cost_csv(path);
}

void write_pslg(const std::string& path, const PseudoLabelGrid& grid) {
    const Index n = grid.q.rows();
    if (static_cast<Index>(grid.gate.flags.size()) != n || grid.layout.rows() != n) {
        throw std::invalid_argument("write_pslg: inconsistent grid");
    }
    ByteWriter w(path);
    w.magic("PSLG");
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(grid.q.cols()));
    w.u32(static_cast<std::uint32_t>(grid.layout.batch));
    w.u32(static_cast<std::uint32_t>(grid.layout.height));
    w.u32(static_cast<std::uint32_t>(grid.layout.width));
    w.f64(grid.gate.gamma);
    write_matrix_body(w, grid.q);
    std::uint8_t packed = 0;
    for (Index i = 0; i < n; ++i) {
        if (grid.gate.flags[static_cast<size_t>(i)]) packed |= static_cast<std::uint8_t>(1u << (i % 8));
        if (i % 8 == 7 || i + 1 == n) {
            w.byte(packed);
            packed = 0;
        }
    }
}

PseudoLabelGrid read_pslg(const std::string& path) {
    ByteReader r(path);
    r.expect_magic("PSLG");
    const std::size_t voff = r.offset();
    check_version(r.u16(), voff);
    const std::size_t noff = r.offset();
    const Index n = checked_dim(r.u32(), "row count", noff);
    const std::size_t koff = r.offset();
    const Index k = checked_dim(r.u32(), "class count", koff);
    const std::size_t boff = r.offset();
    const Index batch = checked_dim(r.u32(), "batch", boff);
    const std::size_t hoff = r.offset();
    const Index height = checked_dim(r.u32(), "height", hoff);
    const std::size_t woff = r.offset();
    const Index width = checked_dim(r.u32(), "width", woff);
    if (batch * height * width != n) throw ParseError("layout does not match row count", boff);

    PseudoLabelGrid grid;
    grid.gate.gamma = r.f64();
    grid.layout = LayoutDescriptor{batch, height, width};
    grid.q = read_matrix_body(r, n, k);
    grid.gate.flags.resize(static_cast<size_t>(n));
    std::uint8_t packed = 0;
    for (Index i = 0; i < n; ++i) {
        if (i % 8 == 0) packed = r.byte();
        grid.gate.flags[static_cast<size_t>(i)] = (packed >> (i % 8)) & 1u;
    }
    r.expect_end();
    return grid;
}

void write_qset(const std::string& path, const QuerySet& set) {
    set.validate();
    ByteWriter w(path);
    w.magic("QSET");
    w.u32(static_cast<std::uint32_t>(set.num_queries()));
    w.u32(static_cast<std::uint32_t>(set.num_classes()));
    w.u32(static_cast<std::uint32_t>(set.masks[0].rows()));
    w.u32(static_cast<std::uint32_t>(set.masks[0].cols()));
    for (Index q = 0; q < set.num_queries(); ++q) {
        for (Index j = 0; j < set.scores.cols(); ++j) w.f64(set.scores(q, j));
        const Matrix& m = set.masks[static_cast<size_t>(q)];
        for (Index y = 0; y < m.rows(); ++y) {
            for (Index x = 0; x < m.cols(); ++x) w.f32(static_cast<float>(m(y, x)));
        }
    }
}

QuerySet read_qset(const std::string& path) {
    ByteReader r(path);
    r.expect_magic("QSET");
    std::size_t off = r.offset();
    const Index n = checked_dim(r.u32(), "query count", off);
    off = r.offset();
    const Index k = checked_dim(r.u32(), "class count", off);
    off = r.offset();
    const Index height = checked_dim(r.u32(), "height", off);
    off = r.offset();
    const Index width = checked_dim(r.u32(), "width", off);
    const std::size_t per_query = static_cast<std::size_t>(k + 1) * sizeof(double) +
                                  static_cast<std::size_t>(height) *
                                      static_cast<std::size_t>(width) * sizeof(float);
    if (static_cast<std::size_t>(n) > r.remaining() / per_query) {
        throw ParseError("truncated query body", r.offset());
    }

    QuerySet set;
    set.scores = Matrix(n, k + 1);
    for (Index q = 0; q < n; ++q) {
        for (Index j = 0; j <= k; ++j) set.scores(q, j) = r.f64();
        Matrix m(height, width);
        for (Index y = 0; y < height; ++y) {
            for (Index x = 0; x < width; ++x) m(y, x) = static_cast<double>(r.f32());
        }
        set.masks.push_back(std::move(m));
    }
    r.expect_end();
    return set;
}

void write_prbt(const std::string& path, const ProbTensor& tensor) {
    ByteWriter w(path);
    w.magic("PRBT");
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(tensor.batch()));
    w.u32(static_cast<std::uint32_t>(tensor.classes()));
    w.u32(static_cast<std::uint32_t>(tensor.height()));
    w.u32(static_cast<std::uint32_t>(tensor.width()));
    for (Index b = 0; b < tensor.batch(); ++b) {
        for (Index j = 0; j < tensor.classes(); ++j) {
            for (Index y = 0; y < tensor.height(); ++y) {
                for (Index x = 0; x < tensor.width(); ++x) w.f64(tensor.at(b, j, y, x));
            }
        }
    }
}

ProbTensor read_prbt(const std::string& path) {
    ByteReader r(path);
    r.expect_magic("PRBT");
    const std::size_t voff = r.offset();
    check_version(r.u16(), voff);
    std::size_t off = r.offset();
    const Index b = checked_dim(r.u32(), "batch", off);
    off = r.offset();
    const Index k = checked_dim(r.u32(), "class count", off);
    off = r.offset();
    const Index height = checked_dim(r.u32(), "height", off);
    off = r.offset();
    const Index width = checked_dim(r.u32(), "width", off);
    std::size_t count = 1;
    for (const Index d : {b, k, height, width}) {
        const auto u = static_cast<std::size_t>(d);
        if (count > r.remaining() / sizeof(double) / u) {
            throw ParseError("truncated tensor body", r.offset());
        }
        count *= u;
    }
    std::vector<double> data(count);
    for (double& v : data) v = r.f64();
    r.expect_end();
    const std::size_t end = r.offset();
    try {
        return ProbTensor(b, k, height, width, std::move(data), 1e-4);
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid probability tensor: ") + e.what(), end);
    }
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t hash = 14695981039346656037ull;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= p[i];
        hash *= 1099511628211ull;
    }
    return hash;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t hash = 14695981039346656037ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<std::uint8_t>(buf[i]);
            hash *= 1099511628211ull;
        }
    }
    return hash;
}

}  // namespace sense
