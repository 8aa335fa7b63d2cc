#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "v2g/scenario.hpp"

namespace v2g::sim {

namespace {

using nlohmann::ordered_json;

ordered_json optional_json(const std::optional<std::string>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string capture_jsonl(const channels::ChannelFabric& fabric) {
  std::string out;
  for (const auto& rec : fabric.capture()) {
    ordered_json line;
    line["tick"] = rec.tick;
    line["channel"] = std::string(channels::to_string(rec.channel));
    line["direction"] = fabric.name_of(rec.from) + "->" + fabric.name_of(rec.to);
    line["hop"] = rec.hop;
    line["hex"] = to_hex(rec.wire);
    out += line.dump();
    out += '\n';
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoFailure, "cannot open " + path.string() + " for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw Error(Errc::IoFailure, "write to " + path.string() + " failed");
}

}  // namespace

RunOutput run_scenario(const ScenarioConfig& input) {
  const auto started = std::chrono::steady_clock::now();
  input.validate();
  ScenarioConfig config = input;
  const auto attack_seeds = crypto::Drbg::from_u64(config.seed).fork("attacks");
  for (std::size_t i = 0; i < config.attacks.size(); ++i) {
    auto& e = config.attacks[i];
    if (!e.seed_given) e.scenario.seed = attack_seeds.fork(std::to_string(i)).next_u64();
  }

  const auto wc = config.world_config();
  World world(config.seed, wc);
  auto& rng = world.rng();
  for (std::size_t j = 0; j < config.stations; ++j) world.add_station(0);
  const std::size_t pseudonyms = config.pseudonyms ? config.pseudonyms : config.slots;
  for (std::size_t u = 0; u < config.users; ++u) world.add_user(config.battery.draw(rng), pseudonyms, 0);
  world.seal_pending();

  const SimTime slot_len = wc.slot_length();
  ordered_json sessions = ordered_json::array();
  ordered_json schedules = ordered_json::array();
  bool sessions_ok = true;
  std::vector<std::size_t> order(config.users);

  for (std::uint32_t slot = 0; slot < config.slots; ++slot) {
    // Station prices are per slot; each arriving EV brings its own utility.
    std::vector<contract::StationTerms> prices;
    for (std::size_t j = 0; j < config.stations; ++j) prices.push_back(config.terms.draw(rng).station);
    for (std::size_t u = 0; u < config.users; ++u) order[u] = u;
    std::shuffle(order.begin(), order.end(), rng);

    for (auto u : order) {
      const auto station = static_cast<std::size_t>(rng.below(config.stations));
      const auto offset = static_cast<SimTime>(rng.below(static_cast<std::uint64_t>(std::max<SimTime>(slot_len / 4, 1))));
      SlotTerms terms{config.terms.draw(rng).ev, prices[station]};
      const SimTime start = static_cast<SimTime>(slot) * slot_len + offset;
      auto r = world.run_charging_slot(u, station, slot, start, terms);

      ordered_json s;
      s["slot"] = slot;
      s["user"] = world.user(u).name;
      s["station"] = world.station(station).actor->evcs_id();
      s["pid"] = r.auth.pid;
      s["started_at_ms"] = start;
      s["authenticated"] = r.auth.authenticated;
      s["error"] = r.auth.error ? ordered_json(std::string(to_string(*r.auth.error))) : ordered_json(nullptr);
      s["failed_step"] = r.auth.failed_step;
      sessions.push_back(std::move(s));

      ordered_json sc;
      sc["slot"] = slot;
      sc["user"] = world.user(u).name;
      sc["pid"] = r.auth.pid;
      sc["x_star_kwh"] = r.schedule ? ordered_json(r.schedule->x_star_kwh) : ordered_json(nullptr);
      sc["scheduled_wh"] = r.schedule ? ordered_json(r.schedule->scheduled.wh()) : ordered_json(nullptr);
      sc["bill_total"] = r.bill_total.units();
      sc["status"] = std::string(to_string(r.status));
      sc["dispute_cause"] = optional_json(
          r.dispute_cause ? std::optional<std::string>(std::string(ledger::to_string(*r.dispute_cause)))
                          : std::nullopt);
      sc["resolution"] = optional_json(
          r.resolution ? std::optional<std::string>(std::string(contract::to_string(*r.resolution)))
                       : std::nullopt);
      sc["metering"] = std::string(contract::to_string(r.metering));
      sc["soc_after_kwh"] = world.user(u).battery.soc_kwh;
      schedules.push_back(std::move(sc));

      sessions_ok = sessions_ok && r.auth.authenticated && r.status == SlotStatus::Finalized;
    }
    world.seal_pending();
  }

  ordered_json attacks = ordered_json::array();
  bool attacks_ok = true;
  for (const auto& e : config.attacks) {
    const auto out = adversary::run_scenario(e.scenario, config.harness_config());
    ordered_json a;
    a["scenario_kind"] = std::string(adversary::to_string(out.kind));
    a["variant"] = out.variant;
    a["seed"] = out.seed;
    a["expected"] = out.expected;
    a["observed"] = out.observed;
    a["pass"] = out.pass;
    ordered_json metrics = ordered_json::object();
    for (const auto& [k, v] : out.metrics) metrics[k] = v;
    a["metrics"] = std::move(metrics);
    attacks.push_back(std::move(a));
    attacks_ok = attacks_ok && out.pass;
  }

  auto& ledger = world.ledger();
  const bool chain_ok = ledger.verify_chain();
  auto count_kind = [&](ledger::EntryKind kind) {
    ledger::Query q;
    q.kind = kind;
    return ledger.query(q).size();
  };

  RunOutput out;
  std::ostringstream ledger_out;
  ledger.export_jsonl(ledger_out);
  out.ledger_jsonl = ledger_out.str();
  if (config.capture) out.capture_jsonl = capture_jsonl(world.fabric());
  out.expectations_met = sessions_ok && chain_ok && attacks_ok;

  auto& report = out.report;
  report["config"] = to_json(config);
  report["sessions"] = std::move(sessions);
  report["schedules"] = std::move(schedules);
  report["attacks"] = std::move(attacks);
  report["ledger"] = {{"path", "ledger.jsonl"},
                      {"blocks", ledger.blocks().size()},
                      {"entries", ledger.entry_count()},
                      {"credential_anchors", count_kind(ledger::EntryKind::CredentialAnchor)},
                      {"transactions", count_kind(ledger::EntryKind::TransactionRecord)},
                      {"disputes", count_kind(ledger::EntryKind::DisputeRecord)},
                      {"chain_valid", chain_ok}};
  report["capture_path"] = config.capture ? ordered_json("capture.jsonl") : ordered_json(nullptr);
  report["expectations_met"] = out.expectations_met;
  report["wall_clock_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
  return out;
}

void write_outputs(const RunOutput& out, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "report.json", out.report.dump(2) + "\n");
  write_file(dir / "ledger.jsonl", out.ledger_jsonl);
  const auto capture = dir / "capture.jsonl";
  if (out.capture_jsonl) {
    write_file(capture, *out.capture_jsonl);
  } else {
    std::filesystem::remove(capture, ec);
  }
}

}  // namespace v2g::sim
