#pragma once

#include <string>

#include "cpf/simulation.hpp"

namespace cpf {

/// Fixed trace CSV header. Agents are numbered from 1 in the file.
inline constexpr const char* kTraceCsvHeader =
    "t,agent,px,py,pz,r11,r12,r13,r21,r22,r23,r31,r32,r33,"
    "gamma,eta,y1,y2,y3,v1,w2,w3,v_gamma,phi,J_star";

/// Writes the trace rows as CSV with shortest round-trip decimals.
void export_trace(const Trace& tr, const std::string& csv_path);

/// Reads a CSV produced by export_trace. Only row data is recovered;
/// sample-level records are not part of the CSV contract.
Trace read_trace_csv(const std::string& csv_path);

/// Per-sample solver diagnostics as a companion CSV
/// (t,agent,J_star,iterations,cost_evaluations,max_violation,warm_violation,
///  kcon_norm,stage_integral).
void export_solver_diag(const Trace& tr, const std::string& csv_path);

/// Plot-ready whitespace-separated columns:
///   timeseries.dat            t gamma[i]... phi ynorm[i]...
///   path3d_agent<k>.dat       t px py pz cdx cdy cdz
void emit_plot_data(const Trace& tr, const Scenario& sc, const std::string& out_dir);

/// Terminal metrics of the run as JSON (phi_final, max_phi, y_final_norms,
/// tracking_cost, j_star_final, n_samples, duration, mode, scenario).
void write_summary(const Trace& tr, const std::string& json_path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace cpf
