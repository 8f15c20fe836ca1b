#pragma once

#include "aphid/annotation.hpp"
#include "aphid/cv_split.hpp"
#include "aphid/error.hpp"
#include "aphid/eval.hpp"
#include "aphid/geometry.hpp"
#include "aphid/manifest.hpp"
#include "aphid/patch.hpp"
#include "aphid/png_io.hpp"
#include "aphid/random.hpp"
#include "aphid/report.hpp"
#include "aphid/synth.hpp"
#include "aphid/voc_xml.hpp"
#include "aphid/workflow.hpp"
