#pragma once
#ifndef NLMFM_CHAIN_IO_HPP
#define NLMFM_CHAIN_IO_HPP

// Stored draws on disk: one CSV per parameter block with one row per draw,
// plus manifest.json (config echo, final H, acceptance, H trajectory, ids).
//
//   scalars.csv          psi, tau, tau_gamma
//   jumps.csv            J_1..J_K
//   atoms_mu.csv         mu_1..mu_K
//   atoms_sigma2.csv     sigma2_1..sigma2_K
//   scores.csv           m_h_k, h-major
//   loadings_p{t}.csv    lambda_j_h, area-major (t is 1-based)
//   zeta_p{t}.csv        zeta_h_m
//   gamma_p{t}.csv       gamma_h_m_j
//   loglik.csv           l_1..l_n (only when stored)
//   h_trace.csv          iteration, factors
//   grid.csv             x

#include "nlmfm/sampler.hpp"

#include <filesystem>

namespace nlmfm {

void save_chain(const std::filesystem::path& dir, const ChainDraws& draws);
ChainDraws load_chain(const std::filesystem::path& dir);

}  // namespace nlmfm

#endif  // NLMFM_CHAIN_IO_HPP
