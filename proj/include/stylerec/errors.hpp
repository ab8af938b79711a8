/**
 * @file errors.hpp
 * @brief Exception hierarchy shared by every stylerec module.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stylerec {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

/// Bad argument or configuration value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownSlot : public Error {
 public:
  explicit UnknownSlot(const std::string& name)
      : Error("unknown slot '" + name + "'"), name_(name) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// A product id was declared with two different slots.
class SlotConflict : public Error {
 public:
  explicit SlotConflict(const std::string& product_id)
      : Error("product '" + product_id + "' declared with conflicting slots"),
        product_id_(product_id) {}

  const std::string& product_id() const noexcept { return product_id_; }

 private:
  std::string product_id_;
};

class UnknownProduct : public Error {
 public:
  explicit UnknownProduct(const std::string& product_id)
      : Error("unknown product '" + product_id + "'"), product_id_(product_id) {}

  const std::string& product_id() const noexcept { return product_id_; }

 private:
  std::string product_id_;
};

/// Two products of the same slot where distinct slots are required.
class SlotCollision : public Error {
 public:
  using Error::Error;
};

/// No candidate products available for a slot/window combination.
class EmptyPool : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace stylerec
