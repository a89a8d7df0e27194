#include <cstdint>
#include <fstream>
#include <istream>
#include <new>
#include <stdexcept>

#include "quadlearn/errors.hpp"
#include "quadlearn/harness.hpp"
#include "quadlearn/serialize.hpp"

namespace quadlearn {

namespace {

const std::string kMagic = "QLCKPT";

struct Header {
  std::string magic;
  std::uint32_t version = 0;
  std::string digest;
  std::string config_json;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(magic, version, digest, config_json);
  }
};

Header read_header(std::istream& is, cereal::BinaryInputArchive& ar, const std::filesystem::path& path) {
  // cereal prefixes strings with a 64-bit length; check it before trusting it
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || len != kMagic.size()) throw InputError("not a checkpoint: " + path.string());
  is.seekg(0);
  Header h;
  try {
    ar(h.magic);
    if (h.magic != kMagic) throw InputError("not a checkpoint: " + path.string());
    ar(h.version, h.digest, h.config_json);
  } catch (const cereal::Exception&) {
    throw InputError("truncated or corrupt checkpoint: " + path.string());
  } catch (const std::bad_alloc&) {
    throw InputError("truncated or corrupt checkpoint: " + path.string());
  } catch (const std::length_error&) {
    throw InputError("truncated or corrupt checkpoint: " + path.string());
  }
  if (h.version != kCheckpointVersion) {
    throw InputError("checkpoint version " + std::to_string(h.version) + " is not supported");
  }
  return h;
}

RunConfig header_config(const Header& h) {
  RunConfig cfg = config_from_flat(nlohmann::json::parse(h.config_json));
  if (config_digest(cfg) != h.digest) throw InputError("checkpoint header digest does not match its config");
  return cfg;
}

}  // namespace

template <class Archive>
void serialize(Archive& ar, MetricsRecord& r) {
  ar(r.step, r.episode, r.ret, r.length, r.fell, r.falls_cumulative, r.max_velocity_episode, r.tracking_error_abs,
     r.action_rate_sq, r.critic_updates, r.wall_time);
}

template <class Archive>
void Trainer::serialize(Archive& ar) {
  ar(env_, agent_, buffer_, rng_, obs_, stats_, env_steps_, episodes_, falls_, records_);
}

void Trainer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + tmp);
    cereal::BinaryOutputArchive ar(os);
    Header h{kMagic, kCheckpointVersion, config_digest(cfg_), to_flat_json(cfg_).dump()};
    ar(h.magic, h.version, h.digest, h.config_json);
    const double wall =
        wall_before_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    ar(wall);
    ar(const_cast<Trainer&>(*this));
  }
  std::filesystem::rename(tmp, path);
}

Trainer Trainer::load(const std::filesystem::path& path, const RunConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  cereal::BinaryInputArchive ar(is);
  const Header h = read_header(is, ar, path);
  RunConfig cfg = header_config(h);
  if (expected) {
    const std::string want = config_digest(*expected);
    if (want != h.digest) {
      throw ConfigError("checkpoint was written for a different configuration (digest " + h.digest.substr(0, 12) +
                        ", expected " + want.substr(0, 12) + ")");
    }
    cfg.total_steps = expected->total_steps;
    cfg.out_dir = expected->out_dir;
    cfg.checkpoint_interval = expected->checkpoint_interval;
  }
  Trainer t(cfg);
  try {
    ar(t.wall_before_);
    ar(t);
  } catch (const cereal::Exception& e) {
    throw InputError(std::string("corrupt checkpoint payload: ") + e.what());
  } catch (const std::bad_alloc&) {
    throw InputError("corrupt checkpoint payload: " + path.string());
  } catch (const std::length_error&) {
    throw InputError("corrupt checkpoint payload: " + path.string());
  }
  t.started_ = std::chrono::steady_clock::now();
  return t;
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  cereal::BinaryInputArchive ar(is);
  const Header h = read_header(is, ar, path);
  return {h.version, h.digest, header_config(h)};
}

}  // namespace quadlearn
