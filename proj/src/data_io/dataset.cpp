#include <fstream>
#include <stdexcept>
#include <string>

#include "clof/data_io.hpp"
#include "json_util.hpp"

namespace clof::data {

using detail::Json;

std::string to_string(SystemTag t) {
  switch (t) {
    case SystemTag::es: return "es";
    case SystemTag::g_es: return "g_es";
    case SystemTag::l_es: return "l_es";
    case SystemTag::pos: return "pos";
    case SystemTag::torsion: return "torsion";
  }
  return "?";
}

SystemTag parse_system_tag(const std::string& s) {
  if (s == "es") return SystemTag::es;
  if (s == "g_es") return SystemTag::g_es;
  if (s == "l_es") return SystemTag::l_es;
  if (s == "pos") return SystemTag::pos;
  if (s == "torsion") return SystemTag::torsion;
  throw std::invalid_argument("unknown system: " + s);
}

dynamics::FieldKind field_kind(SystemTag t) {
  switch (t) {
    case SystemTag::es: return dynamics::FieldKind::es;
    case SystemTag::g_es: return dynamics::FieldKind::g_es;
    case SystemTag::l_es: return dynamics::FieldKind::l_es;
    case SystemTag::pos: return dynamics::FieldKind::gravity;
    case SystemTag::torsion: return dynamics::FieldKind::torsion;
  }
  throw std::invalid_argument("field_kind: bad tag");
}

void TrajectoryRecord::validate() const {
  const auto nn = static_cast<std::size_t>(n);
  if (n < 1) throw std::invalid_argument("record: n must be >= 1");
  if (x0.size() != nn || v0.size() != nn) throw std::invalid_argument("record: x0/v0 length differs from n");
  if (!charges.empty() && charges.size() != nn) throw std::invalid_argument("record: charges length");
  if (!masses.empty() && masses.size() != nn) throw std::invalid_argument("record: masses length");
  const int labels = (target_x ? 1 : 0) + (trajectory ? 1 : 0) + (forces ? 1 : 0);
  if (labels != 1) throw std::invalid_argument("record: exactly one of target_x, trajectory, forces");
  switch (system) {
    case SystemTag::pos:
      if (!trajectory) throw std::invalid_argument("record: pos records carry a trajectory");
      break;
    case SystemTag::torsion:
      if (!forces) throw std::invalid_argument("record: torsion records carry forces");
      if (n != 4) throw std::invalid_argument("record: torsion records have 4 particles");
      break;
    default:
      if (!target_x) throw std::invalid_argument("record: n-body records carry target_x");
      if (charges.empty()) throw std::invalid_argument("record: charged system without charges");
  }
  if (target_x && target_x->size() != nn) throw std::invalid_argument("record: target_x length");
  if (forces && forces->size() != nn) throw std::invalid_argument("record: forces length");
  if (trajectory) {
    if (trajectory->times.size() != trajectory->positions.size()) {
      throw std::invalid_argument("record: trajectory times/positions length");
    }
    for (const auto& frame : trajectory->positions) {
      if (frame.size() != nn) throw std::invalid_argument("record: trajectory frame length");
    }
  }
}

std::string to_line(const TrajectoryRecord& r) {
  r.validate();
  CanonicalWriter w;
  w.begin_object();
  w.key("id").value(r.id);
  w.key("system").value(to_string(r.system));
  w.key("n").value(r.n);
  if (!r.charges.empty()) w.key("charges").value(r.charges);
  if (!r.masses.empty()) w.key("masses").value(r.masses);
  w.key("x0").value(r.x0);
  w.key("v0").value(r.v0);
  if (r.target_x) w.key("target_x").value(*r.target_x);
  if (r.trajectory) {
    w.key("trajectory").begin_object();
    w.key("times").value(r.trajectory->times);
    w.key("positions").begin_array();
    for (const auto& f : r.trajectory->positions) w.value(f);
    w.end_array();
    w.end_object();
  }
  if (r.forces) w.key("forces").value(*r.forces);
  w.key("dt").value(r.dt);
  w.key("horizon_steps").value(r.horizon_steps);
  w.end_object();
  return w.str();
}

TrajectoryRecord parse_record(std::string_view line) {
  const Json j = Json::parse(line.begin(), line.end());
  detail::check_keys(j, {"id", "system", "n", "charges", "masses", "x0", "v0", "target_x", "trajectory",
                         "forces", "dt", "horizon_steps"},
                     "record");
  TrajectoryRecord r;
  r.id = detail::as_int(detail::need(j, "id"), "id");
  r.system = parse_system_tag(detail::as_string(detail::need(j, "system"), "system"));
  r.n = static_cast<int>(detail::as_int(detail::need(j, "n"), "n"));
  if (j.contains("charges")) r.charges = detail::as_reals(j["charges"], "charges");
  if (j.contains("masses")) r.masses = detail::as_reals(j["masses"], "masses");
  r.x0 = detail::as_vec3s(detail::need(j, "x0"), "x0");
  r.v0 = detail::as_vec3s(detail::need(j, "v0"), "v0");
  if (j.contains("target_x")) r.target_x = detail::as_vec3s(j["target_x"], "target_x");
  if (j.contains("trajectory")) {
    const Json& t = j["trajectory"];
    detail::check_keys(t, {"times", "positions"}, "trajectory");
    TimeSeries ts;
    ts.times = detail::as_reals(detail::need(t, "times"), "times");
    const Json& p = detail::need(t, "positions");
    if (!p.is_array()) throw std::invalid_argument("trajectory.positions: expected an array");
    for (const auto& f : p) ts.positions.push_back(detail::as_vec3s(f, "positions"));
    r.trajectory = std::move(ts);
  }
  if (j.contains("forces")) r.forces = detail::as_vec3s(j["forces"], "forces");
  r.dt = detail::as_real(detail::need(j, "dt"), "dt");
  r.horizon_steps = static_cast<int>(detail::as_int(detail::need(j, "horizon_steps"), "horizon_steps"));
  r.validate();
  return r;
}

void write_dataset(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : records) {
    text += to_line(r);
    text += '\n';
  }
  write_file(path, text);
}

std::vector<TrajectoryRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TrajectoryRecord> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace clof::data
