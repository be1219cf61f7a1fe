#include "cpf/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "cpf/paths.hpp"

namespace cpf {

std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) {
        throw ValidationError("trace csv: malformed number '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    return f;
}

}  // namespace

void export_trace(const Trace& tr, const std::string& csv_path)
{
    std::ofstream f = open_out(csv_path);
    f << kTraceCsvHeader << "\n";
    std::string line;
    for (const TraceRow& r : tr.rows) {
        line.clear();
        line += format_double(r.t);
        line += ',';
        line += std::to_string(r.agent + 1);
        auto push = [&line](double v) {
            line += ',';
            line += format_double(v);
        };
        push(r.pose.p.x());
        push(r.pose.p.y());
        push(r.pose.p.z());
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) push(r.pose.R(i, j));
        }
        push(r.gamma);
        push(r.eta);
        push(r.y.x());
        push(r.y.y());
        push(r.y.z());
        push(r.u.v1);
        push(r.u.w2);
        push(r.u.w3);
        push(r.v_gamma);
        push(r.phi);
        push(r.j_star);
        f << line << "\n";
    }
}

Trace read_trace_csv(const std::string& csv_path)
{
    std::ifstream f(csv_path);
    if (!f) throw ValidationError("cannot read '" + csv_path + "'");
    std::string line;
    if (!std::getline(f, line) || line != kTraceCsvHeader) {
        throw ValidationError("trace csv: unexpected header");
    }
    Trace tr;
    int max_agent = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cols = split(line, ',');
        if (cols.size() != 25) {
            throw ValidationError("trace csv: expected 25 columns, got " +
                                  std::to_string(cols.size()));
        }
        TraceRow r;
        int c = 0;
        r.t = parse_double(cols[c++]);
        r.agent = static_cast<int>(parse_double(cols[c++])) - 1;
        r.pose.p.x() = parse_double(cols[c++]);
        r.pose.p.y() = parse_double(cols[c++]);
        r.pose.p.z() = parse_double(cols[c++]);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) r.pose.R(i, j) = parse_double(cols[c++]);
        }
        r.gamma = parse_double(cols[c++]);
        r.eta = parse_double(cols[c++]);
        r.y.x() = parse_double(cols[c++]);
        r.y.y() = parse_double(cols[c++]);
        r.y.z() = parse_double(cols[c++]);
        r.u.v1 = parse_double(cols[c++]);
        r.u.w2 = parse_double(cols[c++]);
        r.u.w3 = parse_double(cols[c++]);
        r.v_gamma = parse_double(cols[c++]);
        r.phi = parse_double(cols[c++]);
        r.j_star = parse_double(cols[c++]);
        r.u_gamma_aux = std::numeric_limits<double>::quiet_NaN();  // not part of the CSV
        max_agent = std::max(max_agent, r.agent);
        tr.rows.push_back(r);
    }
    tr.n_agents = max_agent + 1;
    return tr;
}

void export_solver_diag(const Trace& tr, const std::string& csv_path)
{
    std::ofstream f = open_out(csv_path);
    f << "t,agent,J_star,iterations,cost_evaluations,max_violation,warm_violation,"
         "kcon_norm,stage_integral\n";
    for (const SampleRecord& s : tr.samples) {
        f << format_double(s.t) << ',' << (s.agent + 1) << ',' << format_double(s.j_star) << ','
          << s.iterations << ',' << s.cost_evaluations << ',' << format_double(s.max_violation)
          << ',' << format_double(s.warm_violation) << ',' << format_double(s.kcon_norm) << ','
          << format_double(s.stage_integral) << "\n";
    }
}

void emit_plot_data(const Trace& tr, const Scenario& sc, const std::string& out_dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const int n = tr.n_agents;

    {
        std::ofstream f = open_out((fs::path(out_dir) / "timeseries.dat").string());
        f << "# t";
        for (int i = 1; i <= n; ++i) f << " gamma" << i;
        f << " phi";
        for (int i = 1; i <= n; ++i) f << " ynorm" << i;
        f << "\n";
        // Rows are grouped per time with all agents present.
        for (std::size_t r = 0; r + n <= tr.rows.size(); r += n) {
            f << format_double(tr.rows[r].t);
            for (int i = 0; i < n; ++i) f << ' ' << format_double(tr.rows[r + i].gamma);
            f << ' ' << format_double(tr.rows[r].phi);
            for (int i = 0; i < n; ++i) f << ' ' << format_double(tr.rows[r + i].y.norm());
            f << "\n";
        }
    }

    for (int i = 0; i < n; ++i) {
        std::ofstream f =
            open_out((fs::path(out_dir) / ("path3d_agent" + std::to_string(i + 1) + ".dat"))
                         .string());
        f << "# t px py pz cdx cdy cdz\n";
        for (const TraceRow& r : tr.rows) {
            if (r.agent != i) continue;
            const Eigen::Vector3d cd = eval_path(sc.agents[i].model.path, r.gamma);
            f << format_double(r.t) << ' ' << format_double(r.pose.p.x()) << ' '
              << format_double(r.pose.p.y()) << ' ' << format_double(r.pose.p.z()) << ' '
              << format_double(cd.x()) << ' ' << format_double(cd.y()) << ' '
              << format_double(cd.z()) << "\n";
        }
    }
}

void write_summary(const Trace& tr, const std::string& json_path)
{
    nlohmann::json j;
    j["scenario"] = tr.scenario_name;
    j["mode"] = tr.mode;
    j["n_agents"] = tr.n_agents;
    j["n_samples"] = tr.sample_times.size();
    j["duration"] = tr.rows.empty() ? 0.0 : tr.rows.back().t - tr.rows.front().t;
    j["phi_final"] = trace_final_phi(tr);
    j["max_phi"] = trace_max_phi(tr);
    j["y_final_norms"] = trace_final_y_norms(tr);
    j["tracking_cost"] = trace_tracking_cost(tr);

    std::vector<double> j_star_final(tr.n_agents, 0.0);
    for (const SampleRecord& s : tr.samples) j_star_final[s.agent] = s.j_star;
    j["j_star_final"] = j_star_final;

    std::ofstream f = open_out(json_path);
    f << j.dump(2) << "\n";
}

}  // namespace cpf
