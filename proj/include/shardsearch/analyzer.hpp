#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace shardsearch {

/// Lowercases `text` and splits it on maximal runs of non-alphanumeric code
/// points. No stemming and no stopwords. Invalid UTF-8 bytes act as separators.
std::vector<std::string> analyze(std::string_view text);

}  // namespace shardsearch
