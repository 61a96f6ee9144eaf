#include "shardsearch/ranked_list.hpp"

#include <string_view>
#include <unordered_set>

namespace shardsearch {

bool is_well_ordered(const RankedList& list) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    if (!seen.insert(list.entries[i].doc_id).second) return false;
    if (i > 0 && !ranks_before(list.entries[i - 1], list.entries[i])) return false;
  }
  return true;
}

}  // namespace shardsearch
