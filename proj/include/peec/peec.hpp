#pragma once

// Umbrella header for the privacy-enhanced emotion coding toolkit.

#include "peec/errors.hpp"     // IWYU pragma: export
#include "peec/random.hpp"     // IWYU pragma: export
#include "peec/bytes.hpp"      // IWYU pragma: export
#include "peec/matrix.hpp"     // IWYU pragma: export
#include "peec/corpus.hpp"     // IWYU pragma: export
#include "peec/nn.hpp"         // IWYU pragma: export
#include "peec/privacy_model.hpp" // IWYU pragma: export
#include "peec/baselines.hpp"  // IWYU pragma: export
#include "peec/svm.hpp"        // IWYU pragma: export
#include "peec/eval.hpp"       // IWYU pragma: export
#include "peec/sweep.hpp"      // IWYU pragma: export
#include "peec/wire.hpp"       // IWYU pragma: export
#include "peec/services.hpp"   // IWYU pragma: export
