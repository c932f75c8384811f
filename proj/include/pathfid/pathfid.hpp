#pragma once

#include "pathfid/blocks.hpp"
#include "pathfid/corpus.hpp"
#include "pathfid/error.hpp"
#include "pathfid/hoporder.hpp"
#include "pathfid/markers.hpp"
#include "pathfid/metrics.hpp"
#include "pathfid/pathcodec.hpp"
#include "pathfid/pipeline.hpp"
#include "pathfid/rng.hpp"
#include "pathfid/runconfig.hpp"
#include "pathfid/text.hpp"
#include "pathfid/minifid/checkpoint.hpp"
#include "pathfid/minifid/gradcheck.hpp"
#include "pathfid/minifid/model.hpp"
#include "pathfid/minifid/tokenizer.hpp"
#include "pathfid/minifid/train.hpp"
