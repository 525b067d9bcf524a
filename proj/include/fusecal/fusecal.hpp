#pragma once

// Umbrella header.

#include "augment.hpp"     // IWYU pragma: export
#include "ensemble.hpp"    // IWYU pragma: export
#include "errors.hpp"      // IWYU pragma: export
#include "fusionnet.hpp"   // IWYU pragma: export
#include "harness.hpp"     // IWYU pragma: export
#include "image_io.hpp"    // IWYU pragma: export
#include "metrics.hpp"     // IWYU pragma: export
#include "predictions.hpp" // IWYU pragma: export
#include "prng.hpp"        // IWYU pragma: export
#include "synthgen.hpp"    // IWYU pragma: export
