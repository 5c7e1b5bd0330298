#include "spx/see.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace spx::see {

Measurement measure(std::string_view manifest) { return crypto::hash(view(manifest)); }

Bytes AttestationReport::signed_body() const {
  Bytes body;
  body.reserve(kReportSize - crypto::kSignatureLen);
  append(body, measurement);
  append(body, ephemeral_public);
  append(body, nonce);
  append(body, padding);
  return body;
}

Bytes AttestationReport::serialize() const {
  Bytes out = signed_body();
  append(out, signature.bytes);
  return out;
}

AttestationReport AttestationReport::parse(ByteView data) {
  if (data.size() != kReportSize) {
    throw Error(ErrorCode::AttestationInvalid, "report must be " + std::to_string(kReportSize) + " bytes");
  }
  Reader r(data);
  AttestationReport rep;
  rep.measurement = r.array<32>();
  rep.ephemeral_public = r.array<32>();
  rep.nonce = r.array<kAttestNonceLen>();
  rep.padding = r.array<kReportPaddingLen>();
  rep.signature.bytes = r.array<crypto::kSignatureLen>();
  return rep;
}

AttestationReport make_report(const Measurement& m, const Key32& ephemeral_public,
                              const AttestNonce& nonce, const crypto::SigningKey& signer,
                              ByteView padding_prefix) {
  AttestationReport rep;
  rep.measurement = m;
  rep.ephemeral_public = ephemeral_public;
  rep.nonce = nonce;
  std::copy_n(padding_prefix.begin(), std::min(padding_prefix.size(), rep.padding.size()),
              rep.padding.begin());
  rep.signature = crypto::sign(signer, rep.signed_body());
  return rep;
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::BadSignature: return "BadSignature";
    case RejectReason::MeasurementMismatch: return "MeasurementMismatch";
    case RejectReason::FreshnessMismatch: return "FreshnessMismatch";
  }
  return "Unknown";
}

Verdict verify_report(const AttestationReport& report, const Measurement& expected_measurement,
                      const AttestNonce& expected_nonce, const Key32& platform_public) {
  if (!crypto::verify(platform_public, report.signed_body(), report.signature)) {
    return {false, RejectReason::BadSignature};
  }
  if (report.measurement != expected_measurement) return {false, RejectReason::MeasurementMismatch};
  if (report.nonce != expected_nonce) return {false, RejectReason::FreshnessMismatch};
  return {true, RejectReason::BadSignature};
}

Bytes SealedBlob::to_file_bytes() const {
  Bytes out(nonce.begin(), nonce.end());
  append(out, ciphertext);
  return out;
}

SealedBlob SealedBlob::from_file_bytes(ByteView data, std::string session_id) {
  Reader r(data);
  SealedBlob b;
  b.nonce = r.array<crypto::kNonceLen>();
  auto ct = r.rest();
  b.ciphertext.assign(ct.begin(), ct.end());
  b.aad = std::move(session_id);
  return b;
}

namespace {

void check_id(const std::string& id) {
  if (id.empty() || !std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
      })) {
    throw Error(ErrorCode::Config, "session id must be [A-Za-z0-9_-]+: '" + id + "'");
  }
}

Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

HostStore::HostStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path HostStore::path_for(const std::string& id) const {
  check_id(id);
  return dir_ / id;
}

void HostStore::put(const std::string& id, const SealedBlob& blob) {
  auto bytes = blob.to_file_bytes();
  std::ofstream out(path_for(id), std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("host store write failed for " + id);
}

std::optional<SealedBlob> HostStore::get(const std::string& id) const {
  auto p = path_for(id);
  if (!std::filesystem::exists(p)) return std::nullopt;
  return SealedBlob::from_file_bytes(read_file(p), id);
}

void HostStore::remove(const std::string& id) { std::filesystem::remove(path_for(id)); }

std::vector<std::string> HostStore::ids() const {
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Bytes HostStore::raw_contents() const {
  Bytes out;
  for (const auto& id : ids()) append(out, read_file(dir_ / id));
  return out;
}

std::size_t session_footprint(const SpxSession& s) { return serialize(s).size(); }

Enclave::Enclave(std::shared_ptr<const Platform> platform, EnclaveConfig config)
    : platform_(std::move(platform)),
      config_(std::move(config)),
      measurement_(measure(config_.manifest)),
      rng_(config_.seed) {
  rng_.fill(instance_id_);
  sealing_key_.bytes = rng_.key32();
  auto dir = config_.spill_dir;
  if (dir.empty()) {
    dir = std::filesystem::temp_directory_path() /
          ("spx-spill-" + to_hex(instance_id_) + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    owns_spill_dir_ = true;
  }
  store_ = std::make_unique<HostStore>(dir);
}

Enclave::~Enclave() {
  if (owns_spill_dir_) {
    std::error_code ec;
    std::filesystem::remove_all(store_->dir(), ec);
  }
}

Key32 Enclave::mint_ephemeral() {
  std::lock_guard lock(mu_);
  auto kp = crypto::KeyPair::generate(rng_);
  ephemerals_[kp.public_key] = kp;
  return kp.public_key;
}

AttestationReport Enclave::attest(const Key32& ephemeral_public, const AttestNonce& nonce) {
  std::lock_guard lock(mu_);
  if (!ephemerals_.contains(ephemeral_public)) {
    throw Error(ErrorCode::ForeignKey, "ephemeral key was not minted by this enclave");
  }
  return make_report(measurement_, ephemeral_public, nonce, platform_->key_, instance_id_);
}

AttestationReport Enclave::attest_unbound(const AttestNonce& nonce) {
  std::lock_guard lock(mu_);
  return make_report(measurement_, Key32{}, nonce, platform_->key_, instance_id_);
}

Key32 Enclave::ephemeral_dh(const Key32& ephemeral_public, const Key32& remote_public) {
  std::lock_guard lock(mu_);
  auto it = ephemerals_.find(ephemeral_public);
  if (it == ephemerals_.end()) throw Error(ErrorCode::ForeignKey, "unknown ephemeral key");
  return crypto::dh(it->second, remote_public);
}

void Enclave::erase_ephemeral(const Key32& ephemeral_public) {
  std::lock_guard lock(mu_);
  auto it = ephemerals_.find(ephemeral_public);
  if (it == ephemerals_.end()) return;
  std::fill(it->second.private_key.begin(), it->second.private_key.end(), 0);
  ephemerals_.erase(it);
}

bool Enclave::holds_ephemeral(const Key32& ephemeral_public) const {
  std::lock_guard lock(mu_);
  return ephemerals_.contains(ephemeral_public);
}

SealedBlob Enclave::seal(const SpxSession& session) {
  std::lock_guard lock(mu_);
  return seal_locked(session);
}

SpxSession Enclave::unseal(const SealedBlob& blob) {
  std::lock_guard lock(mu_);
  return unseal_locked(blob);
}

SealedBlob Enclave::seal_locked(const SpxSession& session) {
  SealedBlob blob;
  blob.nonce = crypto::counter_nonce(seal_counter_++, 0x5e);
  blob.aad = session.session_id;
  blob.ciphertext = crypto::aead_seal(sealing_key_, blob.nonce, view(blob.aad), serialize(session));
  ++seals_;
  return blob;
}

SpxSession Enclave::unseal_locked(const SealedBlob& blob) {
  auto plain = crypto::aead_open(sealing_key_, blob.nonce, view(blob.aad), blob.ciphertext);
  ++unseals_;
  return deserialize_session(plain);
}

void Enclave::insert_resident_locked(const SpxSession& session) {
  auto existing = resident_.find(session.session_id);
  if (existing != resident_.end()) {
    resident_bytes_ -= existing->second.bytes;
    lru_.erase(existing->second.lru_pos);
    resident_.erase(existing);
  }
  lru_.push_front(session.session_id);
  auto bytes = session_footprint(session);
  resident_.emplace(session.session_id, Resident{session, bytes, lru_.begin()});
  resident_bytes_ += bytes;
  evict_locked();
}

void Enclave::evict_locked() {
  while (resident_bytes_ > config_.memory_cap_bytes && !lru_.empty()) {
    auto victim_id = lru_.back();
    auto it = resident_.find(victim_id);
    store_->put(victim_id, seal_locked(it->second.session));
    resident_bytes_ -= it->second.bytes;
    resident_.erase(it);
    lru_.pop_back();
  }
}

void Enclave::session_put(const SpxSession& session) {
  check_id(session.session_id);
  std::lock_guard lock(mu_);
  store_->remove(session.session_id);
  insert_resident_locked(session);
}

SpxSession Enclave::session_get(const std::string& session_id) {
  std::lock_guard lock(mu_);
  if (auto it = resident_.find(session_id); it != resident_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
    return it->second.session;
  }
  auto blob = store_->get(session_id);
  if (!blob) throw Error(ErrorCode::NotFound, "session " + session_id);
  auto session = unseal_locked(*blob);
  store_->remove(session_id);
  insert_resident_locked(session);
  return session;
}

bool Enclave::session_contains(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  return resident_.contains(session_id) || store_->get(session_id).has_value();
}

EnclaveStats Enclave::stats() const {
  std::lock_guard lock(mu_);
  return {seals_, unseals_, resident_.size(), resident_bytes_, store_->ids().size()};
}

}  // namespace spx::see
