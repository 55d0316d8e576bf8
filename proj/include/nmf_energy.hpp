#ifndef NMF_ENERGY_HPP
#define NMF_ENERGY_HPP

#include "nmf_energy/error.hpp"
#include "nmf_energy/random.hpp"
#include "nmf_energy/matrix.hpp"
#include "nmf_energy/instance.hpp"
#include "nmf_energy/polynomial.hpp"
#include "nmf_energy/quardp.hpp"
#include "nmf_energy/qubo.hpp"
#include "nmf_energy/solver.hpp"
#include "nmf_energy/nmf.hpp"
#include "nmf_energy/integer_solver.hpp"
#include "nmf_energy/stats.hpp"
#include "nmf_energy/io.hpp"
#include "nmf_energy/experiment.hpp"

#endif  // NMF_ENERGY_HPP
