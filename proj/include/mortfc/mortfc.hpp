#pragma once

#include "mortfc/arima.hpp"
#include "mortfc/bridge.hpp"
#include "mortfc/common.hpp"
#include "mortfc/engine.hpp"
#include "mortfc/evaluation.hpp"
#include "mortfc/forest.hpp"
#include "mortfc/hmd.hpp"
#include "mortfc/holt.hpp"
#include "mortfc/lee_carter.hpp"
#include "mortfc/methods.hpp"
#include "mortfc/optim.hpp"
#include "mortfc/records.hpp"
#include "mortfc/report.hpp"
#include "mortfc/smape.hpp"
#include "mortfc/synthetic.hpp"
#include "mortfc/wilcoxon.hpp"
#include "mortfc/wire.hpp"
