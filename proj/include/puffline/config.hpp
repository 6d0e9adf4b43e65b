#pragma once

#include <stdexcept>
#include <string>

#include "puffline/pipeline.hpp"
#include "puffline/synthgen.hpp"

namespace puffline {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a command needs: pipeline tunables plus the synthetic-generator
// parameters. Defaults reproduce the reference setup end to end.
struct FullConfig {
  PipelineParams pipeline;
  SynthConfig synth;
};

// Flat key-value text with [section] headers; '#' and ';' start comments.
// Unknown sections or keys are errors. Parsing starts from the defaults, so
// an empty string yields the default configuration.
FullConfig parse_config(const std::string& text);
FullConfig load_config(const std::string& path);

// Canonical rendering: fixed section and key order, shortest round-trip
// numbers. parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const FullConfig& config);

// FNV-1a over the canonical rendering, as a 16-digit hex string.
std::string config_hash(const FullConfig& config);

}  // namespace puffline
