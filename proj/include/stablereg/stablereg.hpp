#pragma once

#include "stablereg/errors.hpp"
#include "stablereg/random.hpp"
#include "stablereg/dyadic.hpp"
#include "stablereg/regression_model.hpp"
#include "stablereg/distribution.hpp"
#include "stablereg/sample_sequence.hpp"
#include "stablereg/discrepancy.hpp"
#include "stablereg/partitions.hpp"
#include "stablereg/estimator.hpp"
#include "stablereg/generators.hpp"
#include "stablereg/evaluation.hpp"
#include "stablereg/adversary.hpp"
#include "stablereg/io.hpp"
