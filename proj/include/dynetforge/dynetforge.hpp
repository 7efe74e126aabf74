#pragma once

#include "dynetforge/errors.hpp"
#include "dynetforge/autodiff.hpp"
#include "dynetforge/optim.hpp"
#include "dynetforge/graph.hpp"
#include "dynetforge/dynamics.hpp"
#include "dynetforge/agog.hpp"
#include "dynetforge/baselines.hpp"
#include "dynetforge/model.hpp"
#include "dynetforge/training.hpp"
#include "dynetforge/io.hpp"
#include "dynetforge/experiment.hpp"
