#pragma once

#include "fusionfm/ablation.hpp"
#include "fusionfm/checkpoint.hpp"
#include "fusionfm/config.hpp"
#include "fusionfm/continual.hpp"
#include "fusionfm/dataset.hpp"
#include "fusionfm/errors.hpp"
#include "fusionfm/flow.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/metrics.hpp"
#include "fusionfm/optim.hpp"
#include "fusionfm/pipeline.hpp"
#include "fusionfm/png_io.hpp"
#include "fusionfm/random.hpp"
#include "fusionfm/refiner_nets.hpp"
#include "fusionfm/refiner_ops.hpp"
#include "fusionfm/selector.hpp"
#include "fusionfm/synthetic.hpp"
#include "fusionfm/tensor_bridge.hpp"
#include "fusionfm/training.hpp"
#include "fusionfm/unet.hpp"
#include "fusionfm/wasserstein.hpp"
