#pragma once

#include "owlkit/losses.hpp"
#include "owlkit/calibration.hpp"
#include "owlkit/kernels.hpp"
#include "owlkit/dataset.hpp"
#include "owlkit/lbfgs.hpp"
#include "owlkit/fit.hpp"
#include "owlkit/rwl.hpp"
#include "owlkit/irco.hpp"
#include "owlkit/simgen.hpp"
#include "owlkit/methods.hpp"
#include "owlkit/evaluate.hpp"
#include "owlkit/experiment.hpp"
#include "owlkit/io.hpp"
