#include "nbr/chain_dsl.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "nbr/error.hpp"
#include "nbr/rng.hpp"

namespace nbr {

namespace {

class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  std::size_t column() const { return pos_ + 1; }

  bool accept(char c) {
    skip_space();
    if (peek() != c) return false;
    ++pos_;
    return true;
  }

  void expect(char c) {
    if (!accept(c))
      throw ParseError(column(), std::string("expected '") + c + "'" + found());
  }

  std::string_view identifier() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    if (pos_ == start) throw ParseError(column(), "expected a degradation kind" + found());
    return text_.substr(start, pos_ - start);
  }

  double number() {
    skip_space();
    double v = 0.0;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    const auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::general);
    if (ec != std::errc() || ptr == first)
      throw ParseError(column(), "expected a number" + found());
    if (!std::isfinite(v)) throw ParseError(column(), "number must be finite");
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  // number ['/' number]
  double rational() {
    double value = number();
    if (accept('/')) {
      skip_space();
      const std::size_t denom_column = column();
      const double denom = number();
      if (denom == 0.0) throw ParseError(denom_column, "division by zero");
      value /= denom;
    }
    return value;
  }

 private:
  std::string found() const {
    if (at_end()) return ", found end of input";
    return std::string(", found '") + text_[pos_] + "'";
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

DegradationChain parse_chain(std::string_view text, std::uint64_t seed) {
  Scanner sc(text);
  sc.skip_space();
  if (sc.at_end()) throw ParseError(1, "empty degradation chain");
  DegradationChain chain;
  do {
    sc.skip_space();
    const std::size_t step_column = sc.column();
    const std::string_view name = sc.identifier();
    const auto kind = parse_kind(name);
    if (!kind) throw ParseError(step_column, "unknown degradation kind '" + std::string(name) + "'");
    sc.expect(':');
    const double value = sc.rational();
    DegradationSpec spec{*kind, value, derive_key(seed, "step", chain.steps.size())};
    try {
      validate(spec);
    } catch (const InvalidParameter& e) {
      throw ParseError(step_column, e.what());
    }
    chain.steps.push_back(spec);
    sc.skip_space();
  } while (sc.accept('|'));
  sc.skip_space();
  if (!sc.at_end())
    throw ParseError(sc.column(), std::string("unexpected '") + sc.peek() + "'");
  return chain;
}

double parse_rational(std::string_view text) {
  Scanner sc(text);
  const double value = sc.rational();
  sc.skip_space();
  if (!sc.at_end()) throw ParseError(sc.column(), std::string("unexpected '") + sc.peek() + "'");
  return value;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw InvalidParameter("number cannot be formatted");
  return std::string(buf, ptr);
}

std::string render_step(const DegradationSpec& spec) {
  std::string out(to_string(spec.kind));
  out += ':';
  if (spec.kind == DegradationKind::awgn) {
    const double levels = std::round(spec.param * 255.0);
    if (levels != 0.0 && levels / 255.0 == spec.param)
      return out + format_number(levels) + "/255";
  }
  return out + format_number(spec.param);
}

std::string render_chain(const DegradationChain& chain) {
  std::string out;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    if (i) out += '|';
    out += render_step(chain.steps[i]);
  }
  return out;
}

}  // namespace nbr
