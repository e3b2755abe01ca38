#pragma once

#include <stdexcept>
#include <string>

namespace vqapipe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- scene_graph ---
class MalformedRef : public Error {
 public:
  using Error::Error;
};
class DuplicateNodeId : public Error {
 public:
  using Error::Error;
};
class EmptyPool : public Error {
 public:
  using Error::Error;
};

// --- prompts ---
class InapplicableKind : public Error {
 public:
  using Error::Error;
};
class SameObject : public Error {
 public:
  using Error::Error;
};
class EmptyHints : public Error {
 public:
  using Error::Error;
};

// --- model_client: recoverable per-record failures ---
class ClientError : public Error {
 public:
  using Error::Error;
};
class Timeout : public ClientError {
 public:
  using ClientError::ClientError;
};
class RemoteError : public ClientError {
 public:
  RemoteError(int status, const std::string& what) : ClientError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};
class ExhaustedRetries : public ClientError {
 public:
  using ClientError::ClientError;
};
class UnparsableJudgeReply : public ClientError {
 public:
  using ClientError::ClientError;
};
class BackendLacksEmbeddings : public ClientError {
 public:
  using ClientError::ClientError;
};
class UnknownQuestion : public ClientError {
 public:
  using ClientError::ClientError;
};

// --- scr / metrics ---
class DimMismatch : public Error {
 public:
  using Error::Error;
};
class BadWeights : public Error {
 public:
  using Error::Error;
};

// --- datasets ---
class SchemaError : public Error {
 public:
  SchemaError(const std::string& json_path, const std::string& what)
      : Error(what + " at " + json_path), path_(json_path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};
class DuplicateRecordId : public Error {
 public:
  using Error::Error;
};
class BadFractions : public Error {
 public:
  using Error::Error;
};

}  // namespace vqapipe
