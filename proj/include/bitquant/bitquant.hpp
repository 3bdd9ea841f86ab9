#pragma once

#include <bitquant/binary_io.hpp>
#include <bitquant/bit_packing.hpp>
#include <bitquant/cluster.hpp>
#include <bitquant/compress.hpp>
#include <bitquant/confusion.hpp>
#include <bitquant/dataset.hpp>
#include <bitquant/error.hpp>
#include <bitquant/fixtures.hpp>
#include <bitquant/graph.hpp>
#include <bitquant/infer.hpp>
#include <bitquant/model_file.hpp>
#include <bitquant/packed_model.hpp>
#include <bitquant/parallel.hpp>
#include <bitquant/quant.hpp>
#include <bitquant/quantize_model.hpp>
#include <bitquant/shift.hpp>
#include <bitquant/stats.hpp>
#include <bitquant/sweep.hpp>
#include <bitquant/tensor.hpp>
