#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"

namespace spde::cli {

// name -> bytes of every emitted file, plus the manifest; written under out_dir
struct RunOutput {
  std::map<std::string, std::string> files;
  std::string summary;  // human-readable lines echoed to stdout
};

RunOutput execute(const RunConfig& rc);
// execute, write files and manifest.json; returns the manifest path
std::string write_outputs(const RunConfig& rc, const RunOutput& out);

// SPDE1 snapshot: "SPDE1", d, M, bc as u32 LE, count as u64 LE, then f64 LE coefficients
std::string encode_snapshot(const SpectralField& u);
SpectralField decode_snapshot(const std::string& bytes);

// error JSON {"error": {"kind": ..., "message": ...}}
std::string error_json(const std::string& kind, const std::string& message);

// argument parsing, thread setup, error reporting; returns the exit status
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace spde::cli
