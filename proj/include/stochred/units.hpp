#pragma once

// Runtime dimensional analysis. Values are stored in the base units
// eV, s, cm, K; masses are carried as rest energies.

#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace stochred::units {

/// Exponents of (energy, time, length, temperature).
struct Dim {
  std::array<int, 4> e{0, 0, 0, 0};

  friend bool operator==(const Dim&, const Dim&) = default;
  Dim operator*(const Dim& o) const {
    Dim d;
    for (int i = 0; i < 4; ++i) d.e[i] = e[i] + o.e[i];
    return d;
  }
  Dim operator/(const Dim& o) const {
    Dim d;
    for (int i = 0; i < 4; ++i) d.e[i] = e[i] - o.e[i];
    return d;
  }
  Dim pow(int p) const {
    Dim d;
    for (int i = 0; i < 4; ++i) d.e[i] = e[i] * p;
    return d;
  }
  std::string str() const;
};

inline constexpr Dim kDimensionless{{0, 0, 0, 0}};
inline constexpr Dim kEnergy{{1, 0, 0, 0}};
inline constexpr Dim kTime{{0, 1, 0, 0}};
inline constexpr Dim kLength{{0, 0, 1, 0}};
inline constexpr Dim kArea{{0, 0, 2, 0}};
inline constexpr Dim kTemperature{{0, 0, 0, 1}};
inline constexpr Dim kInverseTime{{0, -1, 0, 0}};
inline constexpr Dim kHeatCapacity{{1, 0, 0, -1}};
inline constexpr Dim kMassRatePerArea{{1, -1, -2, 0}};
inline constexpr Dim kTimeArea{{0, 1, 2, 0}};

inline std::string Dim::str() const {
  static constexpr const char* names[4] = {"eV", "s", "cm", "K"};
  std::string out;
  for (int i = 0; i < 4; ++i) {
    if (e[i] == 0) continue;
    if (!out.empty()) out += '*';
    out += names[i];
    if (e[i] != 1) out += '^' + std::to_string(e[i]);
  }
  return out.empty() ? "1" : out;
}

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Quantity {
 public:
  Quantity() = default;
  Quantity(double base_value, Dim dim) : value_(base_value), dim_(dim) {}

  double value() const { return value_; }
  const Dim& dim() const { return dim_; }

  /// Value in base units after checking the dimension.
  double in(const Dim& expected) const {
    require(expected);
    return value_;
  }
  void require(const Dim& expected) const {
    if (!(dim_ == expected)) {
      throw DimensionError("expected dimension " + expected.str() + ", got " + dim_.str());
    }
  }

  Quantity operator+(const Quantity& o) const {
    o.require(dim_);
    return {value_ + o.value_, dim_};
  }
  Quantity operator-(const Quantity& o) const {
    o.require(dim_);
    return {value_ - o.value_, dim_};
  }
  Quantity operator*(const Quantity& o) const { return {value_ * o.value_, dim_ * o.dim_}; }
  Quantity operator/(const Quantity& o) const { return {value_ / o.value_, dim_ / o.dim_}; }
  Quantity operator*(double s) const { return {value_ * s, dim_}; }
  Quantity operator/(double s) const { return {value_ / s, dim_}; }
  friend Quantity operator*(double s, const Quantity& q) { return q * s; }

 private:
  double value_ = 0.0;
  Dim dim_{};
};

inline Quantity pow(const Quantity& q, int p) {
  return {std::pow(q.value(), p), q.dim().pow(p)};
}

inline Quantity sqrt(const Quantity& q) {
  Dim d;
  for (int i = 0; i < 4; ++i) {
    if (q.dim().e[i] % 2 != 0) throw DimensionError("sqrt of odd dimension " + q.dim().str());
    d.e[i] = q.dim().e[i] / 2;
  }
  return {std::sqrt(q.value()), d};
}

// Conversion table.
inline constexpr double kJouleInEv = 1.0 / 1.602176634e-19;
inline constexpr double kGramInEv = 5.60958860380445e32;  // rest energy of 1 g
inline constexpr double kBoltzmannEvPerK = 8.617e-5;

struct UnitEntry {
  std::string_view symbol;
  double scale;
  Dim dim;
};

inline constexpr std::array<UnitEntry, 21> kUnitTable{{
    {"eV", 1.0, kEnergy},
    {"keV", 1e3, kEnergy},
    {"MeV", 1e6, kEnergy},
    {"GeV", 1e9, kEnergy},
    {"TeV", 1e12, kEnergy},
    {"J", kJouleInEv, kEnergy},
    {"g", kGramInEv, kEnergy},
    {"kg", 1e3 * kGramInEv, kEnergy},
    {"s", 1.0, kTime},
    {"ms", 1e-3, kTime},
    {"us", 1e-6, kTime},
    {"ns", 1e-9, kTime},
    {"min", 60.0, kTime},
    {"h", 3600.0, kTime},
    {"yr", 3.15576e7, kTime},
    {"cm", 1.0, kLength},
    {"mm", 0.1, kLength},
    {"m", 100.0, kLength},
    {"km", 1e5, kLength},
    {"K", 1.0, kTemperature},
    {"1", 1.0, kDimensionless},
}};

/// Factor and dimension of a single unit symbol.
inline const UnitEntry& lookup_unit(std::string_view sym) {
  for (const auto& u : kUnitTable) {
    if (u.symbol == sym) return u;
  }
  throw std::invalid_argument("unknown unit '" + std::string(sym) + "'");
}

/// Parses a unit expression such as "cm2", "J/K", "eV/s/cm^2", "s*cm2",
/// "/s". Each factor is a symbol with an optional integer power.
inline Quantity parse_unit(std::string_view expr) {
  Quantity q(1.0, kDimensionless);
  std::size_t i = 0;
  bool divide = false;
  if (!expr.empty() && expr[0] == '/') {
    divide = true;
    i = 1;
  }
  while (i < expr.size()) {
    std::size_t j = i;
    while (j < expr.size() && std::isalpha(static_cast<unsigned char>(expr[j]))) ++j;
    if (j == i) throw std::invalid_argument("malformed unit '" + std::string(expr) + "'");
    const UnitEntry& u = lookup_unit(expr.substr(i, j - i));
    int power = 1;
    if (j < expr.size() && expr[j] == '^') ++j;
    if (j < expr.size() && (std::isdigit(static_cast<unsigned char>(expr[j])) || expr[j] == '-')) {
      const auto res = std::from_chars(expr.data() + j, expr.data() + expr.size(), power);
      if (res.ec != std::errc()) {
        throw std::invalid_argument("malformed unit power in '" + std::string(expr) + "'");
      }
      j = static_cast<std::size_t>(res.ptr - expr.data());
    }
    const Quantity f = pow(Quantity(u.scale, u.dim), power);
    q = divide ? q / f : q * f;
    if (j < expr.size()) {
      if (expr[j] == '/') {
        divide = true;
      } else if (expr[j] == '*' || expr[j] == '.') {
        divide = false;
      } else {
        throw std::invalid_argument("malformed unit '" + std::string(expr) + "'");
      }
      ++j;
      if (j == expr.size()) throw std::invalid_argument("dangling operator in unit");
    }
    i = j;
  }
  return q;
}

/// Parses "<number><unit>", e.g. "8.6e-6eV", "1cm2", "4.18J/K", "1e10/s".
inline Quantity parse_quantity(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc()) {
    throw std::invalid_argument("cannot parse quantity '" + std::string(text) + "'");
  }
  std::string_view rest(res.ptr, static_cast<std::size_t>(text.data() + text.size() - res.ptr));
  while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  if (rest.empty()) return {v, kDimensionless};
  return parse_unit(rest) * v;
}

/// Parses and checks the dimension.
inline Quantity parse_quantity(std::string_view text, const Dim& expected) {
  Quantity q = parse_quantity(text);
  q.require(expected);
  return q;
}

/// Value of q expressed in `unit` (for output), e.g. to_unit(t, "min").
inline double to_unit(const Quantity& q, std::string_view unit) {
  const Quantity u = parse_unit(unit);
  q.require(u.dim());
  return q.value() / u.value();
}

inline Quantity energy_ev(double ev) { return {ev, kEnergy}; }
inline Quantity seconds(double s) { return {s, kTime}; }
inline Quantity square_cm(double a) { return {a, kArea}; }
inline Quantity kelvin(double t) { return {t, kTemperature}; }
inline Quantity per_second(double r) { return {r, kInverseTime}; }

}  // namespace stochred::units
