#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ammrg::text {

/// ASCII lowercase, ASCII punctuation removed, split on whitespace.
std::vector<std::string> tokenize(std::string_view s);

/// Split on '.', trimming whitespace; each returned sentence ends with '.'.
std::vector<std::string> split_sentences(std::string_view report);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace ammrg::text
