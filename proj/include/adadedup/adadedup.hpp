#pragma once

#include "adadedup/adaptation.hpp"
#include "adadedup/baselines.hpp"
#include "adadedup/benchmark.hpp"
#include "adadedup/clustering.hpp"
#include "adadedup/density.hpp"
#include "adadedup/error.hpp"
#include "adadedup/hash.hpp"
#include "adadedup/io.hpp"
#include "adadedup/parallel.hpp"
#include "adadedup/pipeline.hpp"
#include "adadedup/proxy.hpp"
#include "adadedup/rng.hpp"
#include "adadedup/synth.hpp"
#include "adadedup/types.hpp"
