#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rectnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidShape : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct InvalidRange : Error {
  using Error::Error;
};

struct InvalidParam : Error {
  using Error::Error;
};

// Backward called in train mode without a matching forward.
struct StaleCache : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct DivergenceError : Error {
  DivergenceError(std::size_t epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace rectnet
