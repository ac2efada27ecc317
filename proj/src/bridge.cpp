// SPDX-License-Identifier: Apache-2.0
#include "flicker/bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sodium.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "flicker/error.hpp"

namespace flicker {

namespace {

using nlohmann::json;

void ensure_sodium() {
  static const bool ok = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return sodium_init() >= 0;
  }();
  require(ok, "bridge", "libsodium failed to initialize");
}

void store_le(float v, unsigned char* out) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>(bits >> (8 * i));
}

float load_le(const unsigned char* in) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(in[i]) << (8 * i);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

std::string encode_pixels(const Image& image) {
  ensure_sodium();
  std::vector<unsigned char> raw(image.data.size() * 4);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    store_le(static_cast<float>(image.data[i]), &raw[4 * i]);
  }
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(raw.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), raw.data(), raw.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

Image decode_pixels(const std::string& text, int height, int width) {
  ensure_sodium();
  require(height >= 1 && width >= 1, "bridge", "pixel block needs positive dimensions");
  Image image(height, width);
  std::vector<unsigned char> raw(image.data.size() * 4);
  std::size_t len = 0;
  const int rc = sodium_base642bin(raw.data(), raw.size(), text.data(), text.size(), nullptr, &len,
                                   nullptr, sodium_base64_VARIANT_ORIGINAL);
  require(rc == 0 && len == raw.size(), "bridge",
          "pixel block is not base64 of height*width*3 float32 values");
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const float v = load_le(&raw[4 * i]);
    require(std::isfinite(v), "bridge", "pixel block contains non-finite values");
    image.data[i] = v;
  }
  return image;
}

BridgeClassifier::BridgeClassifier(const std::string& command, int height, int width,
                                   std::vector<std::string> labels, int timeout_ms)
    : height_(height), width_(width), labels_(std::move(labels)), timeout_ms_(timeout_ms) {
  ensure_sodium();
  require(height >= 1 && width >= 1, "bridge", "bridge input size must be positive");
  require(timeout_ms > 0, "bridge", "bridge timeout must be positive");
  require(!command.empty(), "bridge", "bridge command is empty");
  int in_pipe[2], out_pipe[2];
  require(::pipe2(in_pipe, O_CLOEXEC) == 0 && ::pipe2(out_pipe, O_CLOEXEC) == 0, "bridge",
          "cannot create pipes for the bridge child");
  const pid_t pid = ::fork();
  require(pid >= 0, "bridge", "fork failed");
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  if (labels_.empty()) {
    const Image probe(height_, width_);
    const json req{{"op", "forward"}, {"height", height_}, {"width", width_},
                   {"pixels", encode_pixels(probe)}};
    const std::size_t k = parse_logits(request(req.dump()), nullptr).size();
    for (std::size_t i = 0; i < k; ++i) labels_.push_back("class_" + std::to_string(i));
  }
  require(!labels_.empty(), "bridge", "bridge classifier reported no classes");
}

BridgeClassifier::~BridgeClassifier() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) return;
      ::usleep(10000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
}

std::string BridgeClassifier::request(const std::string& line) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const std::string msg = line + "\n";
  std::size_t sent = 0;
  while (sent < msg.size()) {
    const ssize_t n = ::write(to_child_, msg.data() + sent, msg.size() - sent);
    if (n < 0 && errno == EINTR) continue;
    require(n > 0, "bridge", "bridge child closed its input");
    sent += static_cast<std::size_t>(n);
  }
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return reply;
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms_);
    if (ready < 0 && errno == EINTR) continue;
    require(ready > 0, "bridge_timeout",
            "bridge child did not answer within " + std::to_string(timeout_ms_) + " ms");
    char chunk[65536];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    require(n > 0, "bridge", "bridge child closed its output before answering");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::vector<double> BridgeClassifier::parse_logits(const std::string& response,
                                                   std::optional<Image>* grad) const {
  json doc;
  try {
    doc = json::parse(response);
  } catch (const json::exception& e) {
    throw Error("bridge", std::string("bridge reply is not valid JSON: ") + e.what());
  }
  require(doc.is_object(), "bridge", "bridge reply must be an object");
  if (doc.contains("error")) {
    throw Error("bridge", "bridge child reported: " + doc["error"].dump());
  }
  require(doc.contains("logits") && doc["logits"].is_array() && !doc["logits"].empty(), "bridge",
          "bridge reply lacks a logits array");
  std::vector<double> logits;
  for (const json& v : doc["logits"]) {
    require(v.is_number(), "bridge", "bridge logits must be numbers");
    logits.push_back(v.get<double>());
    require(std::isfinite(logits.back()), "bridge", "bridge returned non-finite logits");
  }
  if (grad != nullptr) {
    require(doc.contains("grad") && doc["grad"].is_string(), "bridge",
            "bridge gradient reply lacks a grad block");
    *grad = decode_pixels(doc["grad"].get<std::string>(), height_, width_);
  }
  return logits;
}

ClassifierOutput BridgeClassifier::forward(const Image& image) const {
  check_input(image);
  const json req{{"op", "forward"}, {"height", height_}, {"width", width_},
                 {"pixels", encode_pixels(image)}};
  std::vector<double> logits = parse_logits(request(req.dump()), nullptr);
  require(static_cast<int>(logits.size()) == class_count(), "bridge",
          "bridge returned the wrong number of logits");
  return ClassifierOutput::from_logits(std::move(logits));
}

LossGradient BridgeClassifier::loss_and_input_gradient(const Image& image, int target) const {
  check_input(image);
  check_target(target);
  const json req{{"op", "gradient"}, {"height", height_}, {"width", width_},
                 {"target", target}, {"pixels", encode_pixels(image)}};
  std::optional<Image> grad;
  std::vector<double> logits = parse_logits(request(req.dump()), &grad);
  require(static_cast<int>(logits.size()) == class_count(), "bridge",
          "bridge returned the wrong number of logits");
  LossGradient out;
  out.output = ClassifierOutput::from_logits(logits);
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  out.loss = top + std::log(sum) - logits[target];
  out.grad = std::move(*grad);
  return out;
}

void serve_bridge(std::istream& in, std::ostream& out, const BridgeHandler& handler) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json reply;
    try {
      const json req = json::parse(line);
      const std::string op = req.at("op");
      const int h = req.at("height");
      const int w = req.at("width");
      const Image image = decode_pixels(req.at("pixels").get<std::string>(), h, w);
      if (op == "forward") {
        require(static_cast<bool>(handler.forward), "bridge", "forward not supported");
        reply["logits"] = handler.forward(image);
      } else if (op == "gradient") {
        require(static_cast<bool>(handler.gradient), "bridge", "gradient not supported");
        auto [logits, grad] = handler.gradient(image, req.at("target").get<int>());
        reply["logits"] = logits;
        reply["grad"] = encode_pixels(grad);
      } else {
        throw Error("bridge", "unknown op '" + op + "'");
      }
    } catch (const std::exception& e) {
      reply = json{{"error", e.what()}};
    }
    out << reply.dump() << "\n" << std::flush;
  }
}

BridgeHandler classifier_handler(const Classifier& classifier) {
  BridgeHandler h;
  h.forward = [&classifier](const Image& image) { return classifier.forward(image).logits; };
  h.gradient = [&classifier](const Image& image, int target) {
    LossGradient lg = classifier.loss_and_input_gradient(image, target);
    return std::make_pair(lg.output.logits, std::move(lg.grad));
  };
  return h;
}

}  // namespace flicker
