#pragma once

#include "dataset_io.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "hash.hpp"
#include "image.hpp"
#include "pipeline.hpp"
#include "poison.hpp"
#include "selection.hpp"
#include "serialization.hpp"
#include "stealth.hpp"
#include "training_log.hpp"
#include "triggers.hpp"
#include "version.hpp"
