#pragma once

#include "bilingual.hpp"
#include "core.hpp"
#include "embeddings.hpp"
#include "evaluation.hpp"
#include "multilingual.hpp"
#include "objectives.hpp"
#include "synthetic.hpp"
#include "transport.hpp"
