#include "lmd/synth.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>
#include <utility>

#include "lmd/error.hpp"
#include "lmd/text.hpp"

namespace lmd {

namespace {

struct Port {
  const char* protocol;
  const char* port;
};

constexpr std::array<Port, 10> kPorts = {{{"6", "445"},
                                          {"6", "80"},
                                          {"6", "443"},
                                          {"17", "53"},
                                          {"6", "88"},
                                          {"6", "135"},
                                          {"6", "389"},
                                          {"6", "3389"},
                                          {"6", "22"},
                                          {"17", "123"}}};

class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  std::uint32_t below(std::uint32_t n) { return static_cast<std::uint32_t>(engine_() % n); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }

 private:
  std::mt19937_64 engine_;
};

std::string host_name(std::uint32_t i) {
  std::string digits = std::to_string(i);
  return "H" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

struct Habitual {
  std::uint32_t src, dst, port;
  bool day_only;
};

RawEvent flow(std::int64_t ts, std::string src, std::string dst, const Port& port) {
  RawEvent e;
  e.timestamp = ts;
  e.kind = EventKind::kFlow;
  e.src_host = std::move(src);
  e.dst_host = std::move(dst);
  e.protocol = port.protocol;
  e.dst_port = port.port;
  return e;
}

}  // namespace

SynthConfig SynthConfig::standard() { return SynthConfig{}; }

SynthConfig SynthConfig::mini() {
  SynthConfig c;
  c.seed = 11;
  c.windows = 30;
  c.hosts = 40;
  c.habitual_pairs = 45;
  c.day_night_period = 10;
  c.noise_per_window = 2;
  c.users = 8;
  c.servers = 3;
  c.fans = 2;
  c.fan_size = 3;
  c.first_attack_window = 12;
  c.attack_spacing = 10;
  return c;
}

SynthData generate_synthetic(const SynthConfig& c) {
  if (c.hosts < c.servers + 2 || c.windows == 0 || c.window_length <= 0 ||
      c.day_night_period == 0 || c.fan_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic config is inconsistent");
  }
  if (c.fans > 0 &&
      c.first_attack_window + static_cast<std::uint64_t>(c.fans - 1) * c.attack_spacing >= c.windows) {
    throw Error(ErrorCode::kInvalidArgument, "attack does not fit into the window range");
  }
  Random rng(c.seed);

  // Habitual pool; a pair is used with one port only.
  std::set<std::pair<std::uint32_t, std::uint32_t>> used;
  std::vector<Habitual> pool;
  const std::uint64_t max_pairs = static_cast<std::uint64_t>(c.hosts) * (c.hosts - 1);
  while (pool.size() < c.habitual_pairs && used.size() < max_pairs) {
    const std::uint32_t a = rng.below(c.hosts);
    const std::uint32_t b = rng.below(c.hosts);
    if (a == b || !used.insert({a, b}).second) continue;
    pool.push_back({a, b, rng.below(kPorts.size()), rng.chance(c.day_only_fraction)});
  }

  // Attack chain: every fan source is a target of the previous fan, every
  // (source, target) pair is new.
  struct Injected {
    std::uint32_t window, src, dst;
  };
  std::vector<Injected> attack;
  std::set<std::uint32_t> touched;
  std::uint32_t source = rng.below(c.hosts);
  touched.insert(source);
  for (std::uint32_t f = 0; f < c.fans; ++f) {
    const std::uint32_t w = c.first_attack_window + f * c.attack_spacing;
    std::vector<std::uint32_t> targets;
    while (targets.size() < c.fan_size) {
      const std::uint32_t t = rng.below(c.hosts);
      if (touched.contains(t) || used.contains({source, t})) continue;
      touched.insert(t);
      targets.push_back(t);
    }
    for (std::uint32_t t : targets) {
      attack.push_back({w, source, t});
      used.insert({source, t});
    }
    source = targets[rng.below(static_cast<std::uint32_t>(targets.size()))];
  }

  SynthData out;
  const Port smb = kPorts[0];
  for (std::uint32_t w = 0; w < c.windows; ++w) {
    const std::int64_t base = static_cast<std::int64_t>(w) * c.window_length;
    const auto stamp = [&] { return base + rng.below(static_cast<std::uint32_t>(c.window_length)); };
    const bool day = (w % c.day_night_period) < (c.day_night_period + 1) / 2;

    for (const Habitual& h : pool) {
      if (h.day_only && !day) continue;
      if (!rng.chance(c.recurrence)) continue;
      out.events.push_back(flow(stamp(), host_name(h.src), host_name(h.dst), kPorts[h.port]));
    }

    // Users log on from their home host to a server.
    for (std::uint32_t u = 0; u < c.users; ++u) {
      if (!rng.chance(c.logon_probability)) continue;
      RawEvent e;
      e.timestamp = stamp();
      e.kind = EventKind::kAuth;
      e.user = "U" + std::to_string(u);
      e.domain = "DOM1";
      e.src_host = host_name(c.servers + u % (c.hosts - c.servers));
      e.dst_host = host_name(u % c.servers);
      e.auth_package = "Kerberos";
      e.logon_type = "Network";
      e.orientation = "LogOn";
      e.outcome = "Success";
      out.events.push_back(std::move(e));
    }

    // Injected edges of this window.
    std::set<std::uint32_t> busy;
    for (const Injected& a : attack) {
      if (a.window != w) continue;
      busy.insert(a.src);
      busy.insert(a.dst);
      const std::int64_t ts = stamp();
      out.events.push_back(flow(ts, host_name(a.src), host_name(a.dst), smb));
      out.labels.push_back({ts, "U_admin@DOM1", host_name(a.src), host_name(a.dst)});
    }

    // Noise: one-off flows with pairwise distinct endpoints; the first one
    // runs between two hosts never seen before.
    for (std::uint32_t i = 0; i < c.noise_per_window; ++i) {
      const Port& port = kPorts[rng.below(kPorts.size())];
      if (i == 0) {
        const std::string prefix = "X" + std::to_string(w) + "-";
        out.events.push_back(flow(stamp(), prefix + "a", prefix + "b", port));
        continue;
      }
      for (int tries = 0; tries < 1000; ++tries) {
        const std::uint32_t a = rng.below(c.hosts);
        const std::uint32_t b = rng.below(c.hosts);
        if (a == b || busy.contains(a) || busy.contains(b) || used.contains({a, b})) continue;
        busy.insert(a);
        busy.insert(b);
        out.events.push_back(flow(stamp(), host_name(a), host_name(b), port));
        break;
      }
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
  std::stable_sort(out.labels.begin(), out.labels.end(),
                   [](const LabelRecord& a, const LabelRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

void write_generic_events(std::ostream& out, std::span<const RawEvent> events) {
  out << "kind,timestamp,user,domain,src,dst,field1,field2\n";
  for (const RawEvent& e : events) {
    const bool auth = e.kind == EventKind::kAuth;
    out << (auth ? "auth" : "flow") << ',' << e.timestamp << ',' << text::csv_field(e.user) << ','
        << text::csv_field(e.domain) << ',' << text::csv_field(e.src_host) << ','
        << text::csv_field(e.dst_host) << ','
        << text::csv_field(auth ? e.auth_package : e.protocol) << ','
        << text::csv_field(auth ? e.logon_type : e.dst_port) << '\n';
  }
}

void write_label_records(std::ostream& out, std::span<const LabelRecord> labels) {
  for (const LabelRecord& r : labels) {
    out << r.timestamp << ',' << text::csv_field(r.user) << ',' << text::csv_field(r.src_host)
        << ',' << text::csv_field(r.dst_host) << '\n';
  }
}

}  // namespace lmd
