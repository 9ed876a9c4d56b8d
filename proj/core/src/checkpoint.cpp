#include "pve/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pve/binary_io.hpp"

namespace pve {
namespace {

void put_record(std::ostream& os, const std::string& name, const Shape& shape, std::span<const float> data) {
  io::put_u64(os, name.size());
  os.write(name.data(), std::streamsize(name.size()));
  io::put_u64(os, shape.size());
  for (auto e : shape) io::put_u64(os, e);
  io::put_f32s(os, data);
}

std::pair<std::string, Tensor> get_record(io::Reader& in) {
  const auto name_len = in.u64();
  if (name_len > 4096) throw std::runtime_error(in.what() + ": implausible name length");
  std::string name(name_len, '\0');
  in.bytes(name.data(), name_len);
  const auto rank = in.u64();
  if (rank == 0 || rank > 8) throw std::runtime_error(in.what() + ": implausible rank for " + name);
  Shape shape(rank);
  for (auto& e : shape) e = in.u64();
  Tensor t(shape);
  in.f32s(t.data());
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.params.size()) throw std::invalid_argument("checkpoint names/params size mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");

  io::put_tag(os, "PVE1");
  io::put_u64(os, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    put_record(os, ckpt.names[i], ckpt.params[i].shape(), ckpt.params[i].data());

  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    io::put_tag(os, "ADAM");
    io::put_u64(os, a.step);
    io::put_u64(os, a.skipped);
    io::put_f32(os, a.hyper.learning_rate);
    io::put_f32(os, a.hyper.beta1);
    io::put_f32(os, a.hyper.beta2);
    io::put_f32(os, a.hyper.epsilon);
    io::put_u64(os, a.m.size());
    for (std::size_t i = 0; i < a.m.size(); ++i)
      put_record(os, "m:" + ckpt.names.at(i), ckpt.params.at(i).shape(), a.m[i]);
    for (std::size_t i = 0; i < a.v.size(); ++i)
      put_record(os, "v:" + ckpt.names.at(i), ckpt.params.at(i).shape(), a.v[i]);
  }

  if (!ckpt.meta.empty()) {
    std::string text;
    for (const auto& [k, v] : ckpt.meta) text += k + "=" + v + "\n";
    io::put_tag(os, "META");
    io::put_u64(os, text.size());
    os.write(text.data(), std::streamsize(text.size()));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  io::Reader in(is, "checkpoint " + path.string());
  if (in.tag() != "PVE1") throw std::runtime_error(in.what() + ": bad magic");

  Checkpoint ckpt;
  const auto count = in.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, t] = get_record(in);
    ckpt.names.push_back(std::move(name));
    ckpt.params.push_back(std::move(t));
  }

  for (std::string tag = in.tag(); !tag.empty(); tag = in.tag()) {
    if (tag == "ADAM") {
      AdamState a;
      a.step = in.u64();
      a.skipped = in.u64();
      a.hyper.learning_rate = in.f32();
      a.hyper.beta1 = in.f32();
      a.hyper.beta2 = in.f32();
      a.hyper.epsilon = in.f32();
      const auto n = in.u64();
      if (n != count) throw std::runtime_error(in.what() + ": optimizer state does not match parameters");
      for (int pass = 0; pass < 2; ++pass)
        for (std::uint64_t i = 0; i < n; ++i) {
          auto [name, t] = get_record(in);
          (pass == 0 ? a.m : a.v).emplace_back(t.data().begin(), t.data().end());
        }
      ckpt.adam = std::move(a);
    } else if (tag == "META") {
      const auto len = in.u64();
      std::string text(len, '\0');
      in.bytes(text.data(), len);
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
      }
    } else {
      throw std::runtime_error(in.what() + ": unknown section '" + tag + "'");
    }
  }
  return ckpt;
}

}  // namespace pve
