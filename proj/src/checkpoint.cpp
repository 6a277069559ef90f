// Checkpoint container, version 1. Line-oriented UTF-8 text:
//
//   softcl-checkpoint 1
//   dim <d>
//   vocab <V>
//   <token>                      V lines, id order (line k is id k)
//   token_table <V> <d>
//   <d space-separated doubles>  V lines
//   projection <d> <d>
//   <d space-separated doubles>  d lines
//   rng <mt19937_64 state on one line>
//   config <count>
//   <key>=<value>                count lines
//   end
//
// Doubles use the shortest round-trip decimal form, so save/load is exact.

#include <fstream>
#include <sstream>

#include "softcl/errors.hpp"
#include "softcl/text.hpp"
#include "softcl/trainer.hpp"

namespace softcl {

namespace {

constexpr std::string_view kMagic = "softcl-checkpoint 1";

void write_matrix(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

class Reader {
 public:
  Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::string line() {
    std::string l;
    if (!std::getline(in_, l)) fail("unexpected end of file");
    ++line_no_;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return l;
  }

  // Reads "<keyword> <n...>" and returns the numbers.
  std::vector<std::size_t> header(std::string_view keyword, std::size_t count) {
    const std::string l = line();
    std::istringstream is(l);
    std::string kw;
    is >> kw;
    if (kw != keyword) fail("expected '" + std::string(keyword) + "'");
    std::vector<std::size_t> nums(count);
    for (auto& n : nums) {
      if (!(is >> n)) fail("malformed '" + std::string(keyword) + "' header");
    }
    return nums;
  }

  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::string l = line();
      std::string_view rest = l;
      for (std::size_t j = 0; j < cols; ++j) {
        rest = trim(rest);
        const std::size_t sp = rest.find(' ');
        if (!parse_double(rest.substr(0, sp), m(i, j))) fail("bad number");
        rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp);
      }
      if (!trim(rest).empty()) fail("too many values in matrix row");
    }
    return m;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(name_ + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::string name_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.encoder.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write checkpoint " + path.string());
  }
  const auto& enc = ckpt.encoder;
  out << kMagic << '\n';
  out << "dim " << enc.dim() << '\n';
  out << "vocab " << enc.vocab.size() << '\n';
  for (const auto& tok : enc.vocab.tokens()) out << tok << '\n';
  out << "token_table " << enc.token_table.rows() << ' ' << enc.token_table.cols() << '\n';
  write_matrix(out, enc.token_table);
  out << "projection " << enc.projection.rows() << ' ' << enc.projection.cols() << '\n';
  write_matrix(out, enc.projection);
  out << "rng " << ckpt.rng_state << '\n';
  out << "config " << ckpt.config.size() << '\n';
  for (const auto& [k, v] : ckpt.config) out << k << '=' << v << '\n';
  out << "end\n";
  if (!out) {
    throw DataError("failed writing checkpoint " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint " + path.string());
  }
  Reader r(in, path.string());
  if (r.line() != kMagic) r.fail("not a softcl checkpoint (version 1)");
  const std::size_t dim = r.header("dim", 1)[0];
  const std::size_t v = r.header("vocab", 1)[0];
  if (v == 0) r.fail("vocabulary is empty");

  Checkpoint ckpt;
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < v; ++i) tokens.push_back(r.line());
  if (tokens.front() != Vocab::kUnknownToken) r.fail("token 0 must be the unknown token");
  for (std::size_t i = 1; i < v; ++i) {
    if (ckpt.encoder.vocab.add(tokens[i]) != i) r.fail("duplicate vocabulary entry '" + tokens[i] + "'");
  }
  const auto tt = r.header("token_table", 2);
  if (tt[0] != v || tt[1] != dim) r.fail("token_table shape does not match vocab/dim");
  ckpt.encoder.token_table = r.matrix(v, dim);
  const auto pj = r.header("projection", 2);
  if (pj[0] != dim || pj[1] != dim) r.fail("projection must be dim x dim");
  ckpt.encoder.projection = r.matrix(dim, dim);

  const std::string rng_line = r.line();
  if (rng_line.rfind("rng ", 0) != 0) r.fail("expected 'rng'");
  ckpt.rng_state = rng_line.substr(4);
  const std::size_t n_cfg = r.header("config", 1)[0];
  for (std::size_t i = 0; i < n_cfg; ++i) {
    const std::string l = r.line();
    const std::size_t eq = l.find('=');
    if (eq == std::string::npos) r.fail("config entry without '='");
    ckpt.config.emplace_back(l.substr(0, eq), l.substr(eq + 1));
  }
  if (r.line() != "end") r.fail("expected 'end'");
  ckpt.encoder.validate();
  return ckpt;
}

}  // namespace softcl
