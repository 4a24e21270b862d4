#pragma once

#include "abif/attention.hpp"
#include "abif/data.hpp"
#include "abif/dataset.hpp"
#include "abif/errors.hpp"
#include "abif/eval.hpp"
#include "abif/forest.hpp"
#include "abif/forest_io.hpp"
#include "abif/training.hpp"
