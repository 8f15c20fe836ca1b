#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace aphid {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// mask_to_bbox was asked for an instance id with no labeled pixels.
class MissingInstance : public Error {
 public:
  explicit MissingInstance(int id)
      : Error("instance " + std::to_string(id) + " not present in mask"), id_(id) {}
  int id() const { return id_; }

 private:
  int id_;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Raised by read_voc_xml. object_index is the 0-based position of the
// offending <object>, empty when the problem is document-level.
class VocParseError : public Error {
 public:
  VocParseError(const std::string& what, std::optional<std::size_t> object_index = std::nullopt)
      : Error(object_index ? "object " + std::to_string(*object_index) + ": " + what : what),
        message_(what),
        object_index_(object_index) {}
  std::optional<std::size_t> object_index() const { return object_index_; }
  // Message without the object prefix.
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::optional<std::size_t> object_index_;
};

}  // namespace aphid
