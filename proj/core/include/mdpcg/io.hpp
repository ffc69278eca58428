#pragma once

#include <string>

#include "mdpcg/game.hpp"

namespace mdpcg {

/// A parsed game file: the spec plus the optional baseline perturbation.
/// The file's hyperarc order is authoritative and becomes the canonical
/// state-action order of the spec.
struct GameDocument {
  GameSpec spec;
  Vector perturbation;  // zero vector when the file has none
  bool has_perturbation = false;
};

/// Parses the JSON game format:
///   {"states": S, "mass": M,
///    "hyperarcs": [{"state": 1-based, "action": "...",
///                   "heads": [{"state": 1-based, "prob": p}, ...],
///                   "cost": {"a": slope, "b": intercept}}, ...],
///    "perturbation": [K numbers]}   (optional)
/// Head probabilities must sum to 1 within 1e-9 (renormalized exactly).
/// Throws ParseError with the offending hyperarc named.
GameDocument parse_game_json(const std::string& text);
GameDocument load_game_file(const std::string& path);

/// Inverse of parse_game_json; round-trips bit-exactly.
std::string serialize_game(const GameDocument& doc);

}  // namespace mdpcg
