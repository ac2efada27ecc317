// SPDX-License-Identifier: Apache-2.0
#include "flicker/io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "flicker/error.hpp"

namespace flicker {

namespace {

using nlohmann::json;

std::string num(double v) { return fmt::format("{:.16e}", v); }

std::string signal_body(const LightSignal& signal, const std::string& indent) {
  const CameraTimings& t = signal.timings();
  std::string out = "{\n";
  out += fmt::format("{0}  \"format\": \"flicker-signal\",\n{0}  \"version\": 1,\n", indent);
  out += fmt::format("{}  \"readout_us\": {},\n", indent, num(t.readout_us));
  out += fmt::format("{}  \"exposure_us\": {},\n", indent, num(t.exposure_us));
  out += fmt::format("{}  \"rows\": {},\n{}  \"cols\": {},\n", indent, t.rows, indent, t.cols);
  out += fmt::format("{}  \"gamma\": {},\n", indent, num(t.gamma));
  out += fmt::format("{}  \"channels\": {},\n", indent, signal.channels());
  out += fmt::format("{}  \"length\": {},\n", indent, signal.length());
  out += indent + "  \"values\": [\n";
  for (int c = 0; c < signal.channels(); ++c) {
    out += indent + "    [";
    for (int i = 0; i < signal.length(); ++i) {
      out += (i == 0 ? "" : ", ") + num(signal.values().at(c, i));
    }
    out += c + 1 < signal.channels() ? "],\n" : "]\n";
  }
  out += indent + "  ]\n" + indent + "}";
  return out;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error("parse", "malformed " + what + ": " + e.what());
  }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "io", "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), "io", "write failed for " + path.string());
}

json timings_to_json(const CameraTimings& t) {
  return {{"readout_us", t.readout_us},
          {"exposure_us", t.exposure_us},
          {"rows", t.rows},
          {"cols", t.cols},
          {"gamma", t.gamma}};
}

CameraTimings timings_from_json(const json& doc) {
  CameraTimings t;
  try {
    t.readout_us = doc.at("readout_us");
    t.exposure_us = doc.at("exposure_us");
    t.rows = doc.at("rows");
    t.cols = doc.at("cols");
    t.gamma = doc.at("gamma");
  } catch (const json::exception& e) {
    throw Error("parse", std::string("malformed camera timings: ") + e.what());
  }
  t.validate();
  return t;
}

std::string signal_to_text(const LightSignal& signal) { return signal_body(signal, "") + "\n"; }

LightSignal signal_from_json(const json& doc) {
  try {
    require(doc.at("format") == "flicker-signal", "parse", "not a signal document");
    require(doc.at("version") == 1, "parse", "unsupported signal document version");
    const CameraTimings t = timings_from_json(doc);
    const int channels = doc.at("channels");
    const auto& values = doc.at("values");
    require(channels == LightSignal::kChannels && values.size() == std::size_t(channels), "parse",
            "signal document must hold 3 channels");
    const int length = static_cast<int>(values.at(0).size());
    if (doc.contains("length")) {
      require(doc.at("length") == length, "parse", "signal length field disagrees with values");
    }
    ChannelMatrix m(channels, length);
    for (int c = 0; c < channels; ++c) {
      require(values.at(c).size() == std::size_t(length), "parse", "ragged signal channels");
      for (int i = 0; i < length; ++i) m.at(c, i) = values.at(c).at(i).get<double>();
    }
    return LightSignal(std::move(m), t);
  } catch (const json::exception& e) {
    throw Error("parse", std::string("malformed signal document: ") + e.what());
  }
}

LightSignal parse_signal(const std::string& text) {
  return signal_from_json(parse_json(text, "signal document"));
}

void save_signal(const std::filesystem::path& path, const LightSignal& signal) {
  write_text_file(path, signal_to_text(signal));
}

LightSignal load_signal(const std::filesystem::path& path) { return parse_signal(read_text_file(path)); }

std::string bank_to_text(const SignalBank& bank) {
  bank.validate();
  std::string out = "{\n  \"format\": \"flicker-signal-bank\",\n  \"version\": 1,\n  \"entries\": [";
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    const BankEntry& e = bank.entries[i];
    out += i == 0 ? "\n" : ",\n";
    out += "    {\n";
    out += fmt::format("      \"interval\": [{}, {}],\n", num(e.interval.low), num(e.interval.high));
    out += fmt::format("      \"level\": {},\n", num(e.level));
    out += fmt::format("      \"exposure_us\": {},\n", num(e.exposure_us));
    out += fmt::format("      \"final_loss\": {},\n", num(e.final_loss));
    out += fmt::format("      \"iterations_used\": {},\n", e.iterations_used);
    out += "      \"failure\": " + json(e.failure).dump() + ",\n";
    out += "      \"signal\": " + (e.signal ? signal_body(*e.signal, "      ") : std::string("null"));
    out += "\n    }";
  }
  out += bank.entries.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

SignalBank parse_bank(const std::string& text) {
  const json doc = parse_json(text, "signal bank");
  SignalBank bank;
  try {
    require(doc.at("format") == "flicker-signal-bank", "parse", "not a signal bank document");
    require(doc.at("version") == 1, "parse", "unsupported signal bank version");
    for (const json& je : doc.at("entries")) {
      BankEntry e;
      e.interval = {je.at("interval").at(0).get<double>(), je.at("interval").at(1).get<double>()};
      e.level = je.at("level");
      e.exposure_us = je.at("exposure_us");
      e.final_loss = je.at("final_loss");
      e.iterations_used = je.at("iterations_used");
      e.failure = je.at("failure");
      if (!je.at("signal").is_null()) e.signal = signal_from_json(je.at("signal"));
      bank.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error("parse", std::string("malformed signal bank: ") + e.what());
  }
  bank.validate();
  return bank;
}

void save_bank(const std::filesystem::path& path, const SignalBank& bank) {
  write_text_file(path, bank_to_text(bank));
}

SignalBank load_bank(const std::filesystem::path& path) { return parse_bank(read_text_file(path)); }

}  // namespace flicker
