#ifndef HLSD_HLSD_HPP
#define HLSD_HLSD_HPP

#include "hlsd/coeff.hpp"
#include "hlsd/error.hpp"
#include "hlsd/experiment.hpp"
#include "hlsd/io.hpp"
#include "hlsd/localize.hpp"
#include "hlsd/localop.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/oracles.hpp"
#include "hlsd/parallel.hpp"
#include "hlsd/pipeline.hpp"
#include "hlsd/presets.hpp"
#include "hlsd/run.hpp"
#include "hlsd/spectral.hpp"
#include "hlsd/traces.hpp"

#endif
