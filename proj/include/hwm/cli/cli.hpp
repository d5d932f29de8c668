#pragma once

namespace hwm::cli {

// Entry point of the hwm tool: train, sample, eval, bench, params.
int run(int argc, char** argv);

}  // namespace hwm::cli
