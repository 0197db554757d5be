#pragma once

// Umbrella header: anomaly-based exploit detection over hardware
// performance counter traces.

#include "hpcad/error.hpp"
#include "hpcad/eval.hpp"
#include "hpcad/events.hpp"
#include "hpcad/features.hpp"
#include "hpcad/mimicry.hpp"
#include "hpcad/pipeline.hpp"
#include "hpcad/recorder.hpp"
#include "hpcad/stats.hpp"
#include "hpcad/svm.hpp"
#include "hpcad/synth.hpp"
#include "hpcad/trace.hpp"
#include "hpcad/trace_io.hpp"
#include "hpcad/transform.hpp"
