#pragma once

#include <stdexcept>
#include <string>

namespace pointview {

/// Base of every error the toolkit throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or binary input (point files, manifests, CSV).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A cloud with no points.
class EmptyCloudError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, version, shape or truncation in a binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (shape mismatch, unnormalized cloud, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Missing key in an embedding store. key() is the offending key.
class LookupError : public Error {
 public:
  explicit LookupError(std::string key)
      : Error("missing feature key: " + key), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Two logits tables that cannot be joined. id() is the first offending id.
class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::string id)
      : Error(what), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

}  // namespace pointview
