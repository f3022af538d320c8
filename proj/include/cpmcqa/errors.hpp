#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cpmcqa {

// Base class for every error raised by this library. The CLI maps subclasses
// to exit codes: input problems -> 2, data/schema problems -> 3, remote
// endpoint problems -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- input problems (exit code 2) -----------------------------------------

struct MalformedRecord : Error {
  int line;
  MalformedRecord(int line_number, const std::string& reason)
      : Error("malformed record at line " + std::to_string(line_number) + ": " + reason),
        line(line_number) {}
};

struct DuplicateId : Error {
  std::string id;
  DuplicateId(const std::string& record_id, int line_number)
      : Error("duplicate question id '" + record_id + "' at line " + std::to_string(line_number)),
        id(record_id) {}
};

struct TruthNotInOptions : Error {
  std::string id;
  TruthNotInOptions(const std::string& record_id, const std::string& label)
      : Error("record '" + record_id + "': answer label '" + label +
              "' does not name one of the options"),
        id(record_id) {}
};

struct DegenerateSplit : Error {
  explicit DegenerateSplit(const std::string& detail) : Error("degenerate split: " + detail) {}
};

struct UnknownLabel : Error {
  explicit UnknownLabel(const std::string& detail) : Error("unknown option label: " + detail) {}
};

struct EmptyInput : Error {
  explicit EmptyInput(const std::string& detail) : Error("empty input: " + detail) {}
};

// ---- data / schema problems (exit code 3) ----------------------------------

struct CacheCorrupt : Error {
  std::string path;
  CacheCorrupt(const std::string& file_path, const std::string& reason)
      : Error("corrupt cache entry " + file_path + ": " + reason), path(file_path) {}
};

struct MissingCacheEntries : Error {
  std::vector<std::string> keys;
  explicit MissingCacheEntries(std::vector<std::string> missing)
      : Error("missing cache entries for " + std::to_string(missing.size()) +
              " question(s); run `sample` first"),
        keys(std::move(missing)) {}
};

struct UnknownReportSchema : Error {
  explicit UnknownReportSchema(const std::string& detail)
      : Error("unrecognized results schema: " + detail) {}
};

// ---- remote endpoint problems (exit code 4) --------------------------------

struct EndpointUnavailable : Error {
  explicit EndpointUnavailable(const std::string& detail)
      : Error("endpoint unavailable: " + detail) {}
};

struct PartialSample : Error {
  int collected;
  int requested;
  PartialSample(int got, int wanted)
      : Error("sampling aborted after " + std::to_string(got) + "/" + std::to_string(wanted) +
              " responses; cached progress is kept"),
        collected(got),
        requested(wanted) {}
};

}  // namespace cpmcqa
