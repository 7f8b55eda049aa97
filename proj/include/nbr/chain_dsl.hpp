#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "nbr/degradation.hpp"

namespace nbr {

// Parses "kind:number[/number]" steps joined by '|', e.g. "awgn:50/255|jpeg:30"
// (grammar in docs/chain_grammar.ebnf). Step i gets the noise seed
// derive_key(seed, "step", i). Throws ParseError carrying the column.
DegradationChain parse_chain(std::string_view text, std::uint64_t seed = 0);

// Inverse of parse_chain for the step kinds and parameters; seeds are not
// rendered. AWGN sigmas that are whole multiples of 1/255 render as "k/255".
std::string render_chain(const DegradationChain& chain);

std::string render_step(const DegradationSpec& spec);

// "number" or "number/number", e.g. "50/255" or "0.196". Throws ParseError.
double parse_rational(std::string_view text);

// Shortest text that parses back to exactly `v`.
std::string format_number(double v);

}  // namespace nbr
