#pragma once

// Everything except the JSON manifest layer (lcs/manifest.hpp).

#include "check.hpp"
#include "cohomology.hpp"
#include "domain.hpp"
#include "embed.hpp"
#include "errors.hpp"
#include "flow.hpp"
#include "forms.hpp"
#include "models.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "reduce.hpp"
#include "symexpr.hpp"
#include "twisted.hpp"
