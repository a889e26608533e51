#include "cdgmae/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "cdgmae/errors.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/tensor_io.hpp"

namespace fs = std::filesystem;

namespace cdgmae {
namespace {

constexpr const char* kManifestHeader = "cdgmae-checkpoint 1";

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> model_config_items(const ModelConfig& c) {
  return {
      {"image_size", std::to_string(c.image_size)}, {"patch_size", std::to_string(c.patch_size)},
      {"channels", std::to_string(c.channels)},     {"enc_dim", std::to_string(c.enc_dim)},
      {"enc_depth", std::to_string(c.enc_depth)},   {"enc_heads", std::to_string(c.enc_heads)},
      {"dec_dim", std::to_string(c.dec_dim)},       {"dec_depth", std::to_string(c.dec_depth)},
      {"dec_heads", std::to_string(c.dec_heads)},   {"mlp_ratio", std::to_string(c.mlp_ratio)},
      {"num_anchors", std::to_string(c.num_anchors)}, {"target_mask", exact(c.target_mask)},
      {"anchor_mask", exact(c.anchor_mask)},        {"norm_pix", c.norm_pix ? "true" : "false"},
  };
}

bool apply_model_key(ModelConfig& c, const std::string& key, const std::string& value) {
  std::map<std::string, std::size_t*> sizes = {
      {"image_size", &c.image_size}, {"patch_size", &c.patch_size}, {"channels", &c.channels},
      {"enc_dim", &c.enc_dim},       {"enc_depth", &c.enc_depth},   {"enc_heads", &c.enc_heads},
      {"dec_dim", &c.dec_dim},       {"dec_depth", &c.dec_depth},   {"dec_heads", &c.dec_heads},
      {"mlp_ratio", &c.mlp_ratio},   {"num_anchors", &c.num_anchors},
  };
  if (auto it = sizes.find(key); it != sizes.end()) {
    *it->second = parse_size_value(key, value);
    return true;
  }
  if (key == "target_mask") {
    c.target_mask = parse_double_value(key, value);
  } else if (key == "anchor_mask") {
    c.anchor_mask = parse_double_value(key, value);
  } else if (key == "norm_pix") {
    c.norm_pix = parse_bool_value(key, value);
  } else if (key == "preset") {
    c = ModelConfig::preset(value);
  } else {
    return false;
  }
  return true;
}

void save_checkpoint(const fs::path& dir, const ModelParams& params, std::uint64_t step) {
  fs::path staging = dir;
  staging += ".tmp";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw IoError("cannot create " + staging.string() + ": " + ec.message());

  std::ostringstream manifest;
  manifest << kManifestHeader << '\n' << "step " << step << '\n';
  for (const auto& [k, v] : model_config_items(params.config)) manifest << "config " << k << ' ' << v << '\n';
  params.visit([&](const std::string& name, const Tensor& t) {
    manifest << "param " << name << ' ' << shape_string(t.shape()) << '\n';
    write_tensor(staging / (name + ".cdgt"), t);
  });
  write_text_atomic(staging / "manifest.txt", manifest.str());

  fs::path previous = dir;
  previous += ".old";
  fs::remove_all(previous, ec);
  if (fs::exists(dir)) {
    fs::rename(dir, previous, ec);
    if (ec) throw IoError("cannot move aside " + dir.string() + ": " + ec.message());
  }
  fs::rename(staging, dir, ec);
  if (ec) throw IoError("cannot publish checkpoint " + dir.string() + ": " + ec.message());
  fs::remove_all(previous, ec);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.txt";
  std::istringstream is(read_text(manifest_path));
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader) {
    throw IoError(manifest_path.string() + ": not a checkpoint manifest");
  }
  Checkpoint ckpt;
  ModelConfig config;
  std::vector<std::pair<std::string, std::string>> declared;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kind, a, b;
    ls >> kind >> a >> b;
    try {
      if (kind == "step") {
        ckpt.step = std::stoull(a);
      } else if (kind == "config") {
        if (!apply_model_key(config, a, b)) throw ContractError("unknown config key '" + a + "'");
      } else if (kind == "param") {
        declared.emplace_back(a, b);
      } else if (!kind.empty()) {
        throw ContractError("unknown manifest entry '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw IoError(manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  ckpt.params = init_params(config, 0);
  std::size_t index = 0;
  ckpt.params.visit([&](const std::string& name, Tensor& slot) {
    if (index >= declared.size() || declared[index].first != name) {
      throw IoError(manifest_path.string() + ": parameter list does not match architecture at '" + name + "'");
    }
    ++index;
    Tensor loaded = read_tensor(dir / (name + ".cdgt"));
    if (loaded.shape() != slot.shape()) {
      throw IoError((dir / (name + ".cdgt")).string() + ": shape " + shape_string(loaded.shape()) + ", expected " +
                    shape_string(slot.shape()));
    }
    auto dst = slot.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
  });
  if (index != declared.size()) throw IoError(manifest_path.string() + ": extra parameters listed");
  return ckpt;
}

}  // namespace cdgmae
