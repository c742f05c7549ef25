#pragma once

#include <cstdint>
#include <string>

#include "langlab/common.hpp"

namespace langlab {

/// Fixed-point currency value.
///
/// Stored as an integer count of 1e-12 dollar units. Prices are configured
/// with at most 6 fractional digits (per-1M-token prices need sub-cent
/// precision), and cost = tokens * price / 1e6 is then always exact in this
/// representation, so ledger totals carry no accumulation drift.
class Money {
public:
    static constexpr std::int64_t kPicoPerUnit = 1'000'000'000'000LL;  // 1e12
    static constexpr std::int64_t kPicoPerMicro = 1'000'000LL;         // 1e6

    constexpr Money() = default;

    static constexpr Money from_pico(std::int64_t pico) {
        Money m;
        m.pico_ = pico;
        return m;
    }

    static constexpr Money from_micro(std::int64_t micro) {
        return from_pico(micro * kPicoPerMicro);
    }

    static constexpr Money from_units(std::int64_t units) {
        return from_pico(units * kPicoPerUnit);
    }

    /// Parses a plain decimal string such as "2.5", "-0.000001" or "12".
    /// `max_frac_digits` bounds the accepted precision (prices use 6).
    static Money parse(std::string_view s, int max_frac_digits = 12) {
        std::string_view rest = s;
        bool neg = false;
        if (!rest.empty() && (rest[0] == '-' || rest[0] == '+')) {
            neg = rest[0] == '-';
            rest.remove_prefix(1);
        }
        if (rest.empty()) throw ConfigError("Money::parse: empty value '" + std::string(s) + "'");
        std::int64_t units = 0;
        size_t i = 0;
        bool any_int = false;
        for (; i < rest.size() && rest[i] != '.'; ++i) {
            if (rest[i] < '0' || rest[i] > '9')
                throw ConfigError("Money::parse: bad character in '" + std::string(s) + "'");
            units = units * 10 + (rest[i] - '0');
            any_int = true;
        }
        std::int64_t frac_pico = 0;
        int frac_digits = 0;
        if (i < rest.size()) {  // at '.'
            ++i;
            std::int64_t scale = kPicoPerUnit / 10;
            for (; i < rest.size(); ++i, ++frac_digits) {
                if (rest[i] < '0' || rest[i] > '9')
                    throw ConfigError("Money::parse: bad character in '" + std::string(s) + "'");
                if (frac_digits >= max_frac_digits)
                    throw ConfigError("Money::parse: too many fractional digits in '" +
                                      std::string(s) + "'");
                frac_pico += (rest[i] - '0') * scale;
                scale /= 10;
            }
            if (frac_digits == 0 && !any_int)
                throw ConfigError("Money::parse: no digits in '" + std::string(s) + "'");
        }
        if (!any_int && frac_digits == 0)
            throw ConfigError("Money::parse: no digits in '" + std::string(s) + "'");
        std::int64_t pico = units * kPicoPerUnit + frac_pico;
        return from_pico(neg ? -pico : pico);
    }

    /// Nearest representable value for a double amount, rounded to micro
    /// (6 fractional digits). Used when config files carry JSON numbers.
    static Money from_double_micro(double v) {
        double micro = v * 1e6;
        auto rounded = static_cast<std::int64_t>(micro < 0 ? micro - 0.5 : micro + 0.5);
        return from_micro(rounded);
    }

    constexpr std::int64_t pico() const { return pico_; }

    double to_double() const { return static_cast<double>(pico_) / 1e12; }

    /// Decimal rendering. Emits 6 fractional digits when the value is exactly
    /// representable at that precision, otherwise all 12.
    std::string to_string() const {
        std::int64_t v = pico_;
        std::string sign;
        if (v < 0) {
            sign = "-";
            v = -v;
        }
        std::int64_t units = v / kPicoPerUnit;
        std::int64_t frac = v % kPicoPerUnit;
        int digits = (frac % kPicoPerMicro == 0) ? 6 : 12;
        std::string frac_str(static_cast<size_t>(12), '0');
        for (int i = 11; i >= 0; --i) {
            frac_str[static_cast<size_t>(i)] = static_cast<char>('0' + frac % 10);
            frac /= 10;
        }
        frac_str.resize(static_cast<size_t>(digits));
        return sign + std::to_string(units) + "." + frac_str;
    }

    Money& operator+=(Money o) {
        pico_ += o.pico_;
        return *this;
    }
    Money& operator-=(Money o) {
        pico_ -= o.pico_;
        return *this;
    }
    friend Money operator+(Money a, Money b) { return from_pico(a.pico_ + b.pico_); }
    friend Money operator-(Money a, Money b) { return from_pico(a.pico_ - b.pico_); }
    friend bool operator==(Money a, Money b) { return a.pico_ == b.pico_; }
    friend bool operator!=(Money a, Money b) { return a.pico_ != b.pico_; }
    friend bool operator<(Money a, Money b) { return a.pico_ < b.pico_; }
    friend bool operator<=(Money a, Money b) { return a.pico_ <= b.pico_; }
    friend bool operator>(Money a, Money b) { return a.pico_ > b.pico_; }
    friend bool operator>=(Money a, Money b) { return a.pico_ >= b.pico_; }

private:
    std::int64_t pico_ = 0;
};

/// tokens * (price per 1M tokens) / 1e6, exact for prices with <= 6
/// fractional digits. 128-bit intermediate avoids overflow.
inline Money scale_price(std::int64_t tokens, Money price_per_1m) {
    __int128 p = static_cast<__int128>(tokens) * price_per_1m.pico();
    return Money::from_pico(static_cast<std::int64_t>(p / 1'000'000));
}

}  // namespace langlab
