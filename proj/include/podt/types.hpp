#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace podt {

using UserId = std::uint32_t;
using ChainId = std::uint32_t;

/// Engine-wide random source. Every stochastic step draws from one of these,
/// seeded from the scenario config, so a run is reproducible from its seed.
using Rng = std::mt19937_64;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IdOutOfRange : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct StateError : Error {
  using Error::Error;
};

struct AuthorizationError : Error {
  using Error::Error;
};

struct CapacityError : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

/// Smallest integer strictly greater than population / 2.
constexpr std::size_t majority_size(std::size_t population) noexcept {
  return population / 2 + 1;
}

/// Destination of non-fatal degeneracy warnings. Defaults to stderr; tests
/// and batch runs swap in their own sink.
inline std::function<void(std::string_view)>& warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace podt
