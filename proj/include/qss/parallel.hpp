#pragma once

#include <cstddef>
#include <functional>

namespace qss {

/// Runs body(block) for block in [0, blocks) on up to `threads` workers.
/// Blocks are independent, so the result never depends on the worker count.
void parallel_blocks(std::size_t blocks, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace qss
