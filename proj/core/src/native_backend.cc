// Copyright 2026 The corefuzz Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// siglongjmp out of a handler running on the alternate stack trips the
// fortified longjmp check, so this file is built without fortification.

#include "corefuzz/native_backend.h"

#include <poll.h>
#include <sched.h>
#include <setjmp.h>
#include <signal.h>
#include <sys/mman.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <sys/wait.h>
#include <ucontext.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

#if defined(__x86_64__)
#include <cpuid.h>
#endif

namespace corefuzz {

namespace {

// Everything from here to the top of user space is left to the kernel and
// the C runtime (stacks, vdso, mmap arenas).
constexpr uint64_t kReservedHighStart = 0x7e0000000000ULL;
// Room for the brk heap to grow after the maps snapshot.
constexpr uint64_t kHeapSlack = uint64_t{1} << 30;

}  // namespace

#if defined(__x86_64__) && defined(__linux__)

extern "C" {
// Loads the register block and jumps to its rip. Never returns.
__attribute__((visibility("hidden"))) void corefuzz_native_enter(const RegisterState* regs);
__attribute__((visibility("hidden"))) extern uint64_t corefuzz_native_target;
}

static_assert(sizeof(RegisterState) == 18 * 8, "register block layout");

asm(R"(
  .text
  .globl corefuzz_native_enter
  .hidden corefuzz_native_enter
  .type corefuzz_native_enter, @function
corefuzz_native_enter:
  movq 128(%rdi), %rax
  movq %rax, corefuzz_native_target(%rip)
  pushq 136(%rdi)
  popfq
  movq %rdi, %rax
  movq 8(%rax), %rbx
  movq 16(%rax), %rcx
  movq 24(%rax), %rdx
  movq 32(%rax), %rsi
  movq 40(%rax), %rdi
  movq 48(%rax), %rbp
  movq 56(%rax), %rsp
  movq 64(%rax), %r8
  movq 72(%rax), %r9
  movq 80(%rax), %r10
  movq 88(%rax), %r11
  movq 96(%rax), %r12
  movq 104(%rax), %r13
  movq 112(%rax), %r14
  movq 120(%rax), %r15
  movq (%rax), %rax
  jmpq *corefuzz_native_target(%rip)
  .size corefuzz_native_enter, .-corefuzz_native_enter

  .bss
  .balign 8
  .globl corefuzz_native_target
  .hidden corefuzz_native_target
corefuzz_native_target:
  .zero 8
  .text
)");

namespace {

constexpr uint64_t kFlagAC = uint64_t{1} << 18;
constexpr int kHandledSignals[] = {SIGSEGV, SIGILL, SIGFPE, SIGTRAP, SIGBUS, SIGVTALRM};

// Harness-process globals shared with the signal handler.
sigjmp_buf g_jmp;
volatile sig_atomic_t g_in_exec = 0;
RegisterState g_entry;
RegisterState g_exit;
int g_signo = 0;
int g_code = 0;
uint64_t g_addr = 0;
alignas(16) uint8_t g_altstack[1 << 16];

void HarnessSignal(int signo, siginfo_t* si, void* context) {
  if (!g_in_exec) _exit(128 + signo);
  g_in_exec = 0;
  const struct itimerval zero = {};
  setitimer(ITIMER_VIRTUAL, &zero, nullptr);
  const greg_t* g = static_cast<ucontext_t*>(context)->uc_mcontext.gregs;
  static constexpr int kOrder[kNumGprs] = {REG_RAX, REG_RBX, REG_RCX, REG_RDX, REG_RSI, REG_RDI,
                                           REG_RBP, REG_RSP, REG_R8,  REG_R9,  REG_R10, REG_R11,
                                           REG_R12, REG_R13, REG_R14, REG_R15};
  for (int i = 0; i < kNumGprs; ++i) g_exit.gpr[i] = static_cast<uint64_t>(g[kOrder[i]]);
  g_exit.rip = static_cast<uint64_t>(g[REG_RIP]);
  g_exit.rflags = static_cast<uint64_t>(g[REG_EFL]);
  g_signo = signo;
  g_code = si->si_code;
  g_addr = reinterpret_cast<uint64_t>(si->si_addr);
  siglongjmp(g_jmp, 1);
}

void InstallHandlers() {
  stack_t ss = {};
  ss.ss_sp = g_altstack;
  ss.ss_size = sizeof(g_altstack);
  sigaltstack(&ss, nullptr);
  struct sigaction sa = {};
  sa.sa_sigaction = HarnessSignal;
  sa.sa_flags = SA_SIGINFO | SA_ONSTACK;
  sigemptyset(&sa.sa_mask);
  for (int s : kHandledSignals) sigaddset(&sa.sa_mask, s);
  for (int s : kHandledSignals) sigaction(s, &sa, nullptr);
}

struct HarnessRegion {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  uint8_t perms = kPermR | kPermW;
};

int ProtFor(uint8_t perms) {
  int prot = PROT_NONE;
  if (perms & kPermR) prot |= PROT_READ;
  if (perms & kPermW) prot |= PROT_WRITE;
  if (perms & kPermX) prot |= PROT_EXEC;
  return prot;
}

class Harness {
 public:
  Response Handle(const Command& command) {
    if (const auto* m = std::get_if<MapCommand>(&command)) return Map(*m);
    if (const auto* w = std::get_if<WriteCommand>(&command)) return Write(*w);
    if (const auto* p = std::get_if<ProtectCommand>(&command)) return Protect(*p);
    if (const auto* e = std::get_if<ExecCommand>(&command)) return Exec(*e);
    if (const auto* c = std::get_if<ChecksumCommand>(&command)) {
      std::vector<uint8_t> bytes;
      if (!ReadRange(c->start, c->num_bytes, bytes)) return ErrResponse{HarnessError::kBadAddress};
      return SumResponse{ChecksumMemory(bytes)};
    }
    if (const auto* r = std::get_if<ReadCommand>(&command)) {
      std::vector<uint8_t> bytes;
      if (!ReadRange(r->start, r->num_bytes, bytes)) return ErrResponse{HarnessError::kBadAddress};
      return DataResponse{std::move(bytes)};
    }
    for (const HarnessRegion& r : regions_) {
      munmap(reinterpret_cast<void*>(r.start), r.num_bytes);
    }
    regions_.clear();
    return OkResponse{};
  }

 private:
  HarnessRegion* Find(uint64_t start, uint64_t num_bytes) {
    for (HarnessRegion& r : regions_) {
      if (start >= r.start && num_bytes <= r.num_bytes && start - r.start <= r.num_bytes - num_bytes) {
        return &r;
      }
    }
    return nullptr;
  }

  Response Map(const MapCommand& m) {
    if (m.num_bytes == 0 || m.start % kPageSize || m.num_bytes % kPageSize) {
      return ErrResponse{HarnessError::kBadAddress};
    }
    void* want = reinterpret_cast<void*>(m.start);
    void* got = mmap(want, m.num_bytes, PROT_READ | PROT_WRITE,
                     MAP_PRIVATE | MAP_ANONYMOUS | MAP_FIXED_NOREPLACE, -1, 0);
    if (got == MAP_FAILED) return ErrResponse{HarnessError::kMapFailed};
    if (got != want) {
      // Kernels without MAP_FIXED_NOREPLACE treat it as a hint.
      munmap(got, m.num_bytes);
      return ErrResponse{HarnessError::kMapFailed};
    }
    regions_.push_back(HarnessRegion{m.start, m.num_bytes});
    return OkResponse{};
  }

  Response Write(const WriteCommand& w) {
    HarnessRegion* r = Find(w.start, w.bytes.size());
    if (r == nullptr || !(r->perms & kPermW)) return ErrResponse{HarnessError::kBadAddress};
    std::memcpy(reinterpret_cast<void*>(w.start), w.bytes.data(), w.bytes.size());
    return OkResponse{};
  }

  Response Protect(const ProtectCommand& p) {
    HarnessRegion* r = Find(p.start, p.num_bytes);
    if (r == nullptr) return ErrResponse{HarnessError::kBadAddress};
    if (mprotect(reinterpret_cast<void*>(p.start), p.num_bytes, ProtFor(p.perms)) != 0) {
      return ErrResponse{HarnessError::kBadAddress};
    }
    if (p.start == r->start && p.num_bytes == r->num_bytes) r->perms = p.perms;
    return OkResponse{};
  }

  bool ReadRange(uint64_t start, uint64_t num_bytes, std::vector<uint8_t>& out) {
    HarnessRegion* r = Find(start, num_bytes);
    if (r == nullptr) return false;
    const bool unreadable = !(r->perms & kPermR);
    if (unreadable) mprotect(reinterpret_cast<void*>(r->start), r->num_bytes, PROT_READ);
    const auto* p = reinterpret_cast<const uint8_t*>(start);
    out.assign(p, p + num_bytes);
    if (unreadable) mprotect(reinterpret_cast<void*>(r->start), r->num_bytes, ProtFor(r->perms));
    return true;
  }

  Response Exec(const ExecCommand& e) {
    g_entry = e.registers;
    // Single-stepping and alignment checks would turn into spurious signals.
    g_entry.rflags = (e.registers.rflags & ~(kFlagTF | kFlagAC)) | kFlagsAlwaysOne;
    struct itimerval timer = {};
    const uint64_t ms = e.cpu_time_limit_ms == 0 ? 1 : e.cpu_time_limit_ms;
    timer.it_value.tv_sec = static_cast<time_t>(ms / 1000);
    timer.it_value.tv_usec = static_cast<suseconds_t>((ms % 1000) * 1000);
    g_in_exec = 1;
    if (sigsetjmp(g_jmp, 1) == 0) {
      setitimer(ITIMER_VIRTUAL, &timer, nullptr);
      corefuzz_native_enter(&g_entry);
      __builtin_unreachable();
    }
    RegisterState regs = g_exit;
    regs.rflags = CanonicalFlags(regs.rflags);
    switch (g_signo) {
      case SIGTRAP:
        // INT3 reports the address after the trap byte.
        if (g_code != SI_KERNEL) return ErrResponse{HarnessError::kUnexpectedSignal};
        regs.rip -= 1;
        return RegsResponse{regs};
      case SIGVTALRM:
        return ErrResponse{HarnessError::kTimeout};
      case SIGSEGV:
      case SIGBUS: {
        const uint64_t addr = g_code == SI_KERNEL ? 0 : g_addr;
        return FaultResponse{
            SignalRecord{g_signo == SIGSEGV ? Signal::kSegv : Signal::kBus, addr}, regs};
      }
      case SIGILL:
        return FaultResponse{SignalRecord{Signal::kIll, 0}, regs};
      case SIGFPE:
        return FaultResponse{SignalRecord{Signal::kFpe, 0}, regs};
      default:
        return ErrResponse{HarnessError::kUnexpectedSignal};
    }
  }

  std::vector<HarnessRegion> regions_;
};

[[noreturn]] void HarnessMain(int fd, int core_id) {
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core_id, &set);
  if (sched_setaffinity(0, sizeof(set), &set) != 0) _exit(3);
  InstallHandlers();
  Harness harness;
  for (;;) {
    absl::StatusOr<Frame> frame = ReadFrame(fd);
    if (!frame.ok()) _exit(0);
    absl::StatusOr<Command> command = DecodeCommand(*frame);
    const Response response =
        command.ok() ? harness.Handle(*command) : Response(ErrResponse{HarnessError::kBadCommand});
    if (!WriteFrame(fd, EncodeResponse(response)).ok()) _exit(0);
  }
}

}  // namespace

bool NativeSupported() { return true; }

std::string NativePlatformId() {
  unsigned eax = 0, ebx = 0, ecx = 0, edx = 0;
  char vendor[13] = {};
  __get_cpuid(0, &eax, &ebx, &ecx, &edx);
  std::memcpy(vendor, &ebx, 4);
  std::memcpy(vendor + 4, &edx, 4);
  std::memcpy(vendor + 8, &ecx, 4);
  __get_cpuid(1, &eax, &ebx, &ecx, &edx);
  unsigned family = (eax >> 8) & 0xF;
  unsigned model = (eax >> 4) & 0xF;
  if (family == 0xF) family += (eax >> 20) & 0xFF;
  if (family == 0x6 || family >= 0xF) model |= ((eax >> 16) & 0xF) << 4;
  return absl::StrCat("native-", vendor, "-", family, "-", model);
}

#else  // !(x86_64 && linux)

bool NativeSupported() { return false; }
std::string NativePlatformId() { return "native-unsupported"; }

#endif

std::vector<AddressRange> NativeReservedRanges() {
  std::vector<AddressRange> out;
  std::ifstream maps("/proc/self/maps");
  std::string line;
  while (std::getline(maps, line)) {
    unsigned long long start = 0, end = 0;
    if (std::sscanf(line.c_str(), "%llx-%llx", &start, &end) != 2) continue;
    if (start >= kReservedHighStart) continue;
    if (line.find("[heap]") != std::string::npos) end += kHeapSlack;
    out.push_back(AddressRange{start, end});
  }
  out.push_back(AddressRange{kReservedHighStart, kUserAddressLimit});
  return out;
}

int NativeCoreCount() {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof(set), &set) != 0) return 1;
  return CPU_COUNT(&set);
#else
  return 1;
#endif
}

NativeExecutor::~NativeExecutor() { Kill(); }

void NativeExecutor::Kill() {
  if (fd_ >= 0) close(fd_);
  fd_ = -1;
  if (pid_ > 0) {
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
}

absl::Status NativeExecutor::Spawn() {
#if defined(__x86_64__) && defined(__linux__)
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    return absl::UnavailableError("socketpair failed");
  }
  fflush(nullptr);
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    return absl::UnavailableError("fork failed");
  }
  if (pid == 0) {
    close(fds[0]);
    HarnessMain(fds[1], core_id_);
  }
  close(fds[1]);
  fd_ = fds[0];
  pid_ = pid;
  ++spawn_count_;
  return absl::OkStatus();
#else
  return absl::UnimplementedError("native execution needs an x86_64 Linux host");
#endif
}

absl::StatusOr<Response> NativeExecutor::Send(const Command& command) {
  if (pid_ <= 0) {
    if (absl::Status st = Spawn(); !st.ok()) return st;
  }
  if (injector_) injector_(command, pid_);
  if (const auto* e = std::get_if<ExecCommand>(&command)) pending_cpu_ms_ = e->cpu_time_limit_ms;
  auto fail = [this](absl::string_view what) {
    Kill();
    return absl::UnavailableError(absl::StrCat("harness anomaly: ", what));
  };
  if (absl::Status st = WriteFrame(fd_, EncodeCommand(command)); !st.ok()) {
    return fail(st.message());
  }
  const bool is_exec = std::holds_alternative<ExecCommand>(command);
  const int64_t wait_ms = slack_ms_ + (is_exec ? static_cast<int64_t>(pending_cpu_ms_) : 0);
  struct pollfd p = {fd_, POLLIN, 0};
  int ready;
  do {
    ready = poll(&p, 1, static_cast<int>(wait_ms));
  } while (ready < 0 && errno == EINTR);
  if (ready <= 0) return fail("no response");
  absl::StatusOr<Frame> frame = ReadFrame(fd_);
  if (!frame.ok()) return fail(frame.status().message());
  absl::StatusOr<Response> response = DecodeResponse(*frame);
  if (!response.ok()) return fail(response.status().message());
  return response;
}

NativeBackend::NativeBackend(int core_id)
    : Backend(BackendDescriptor{BackendKind::kNative, NativePlatformId(), core_id,
                                kDefaultFlagsMask, NativeReservedRanges()}),
      executor_(core_id) {}

absl::StatusOr<std::unique_ptr<NativeBackend>> MakeNativeBackend(int core_id) {
  if (!NativeSupported()) {
    return absl::UnimplementedError("native execution needs an x86_64 Linux host");
  }
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  if (core_id < 0 || sched_getaffinity(0, sizeof(set), &set) != 0 || core_id >= CPU_SETSIZE ||
      !CPU_ISSET(core_id, &set)) {
    return absl::InvalidArgumentError(absl::StrCat("cannot run on core ", core_id));
  }
#endif
  return std::make_unique<NativeBackend>(core_id);
}

}  // namespace corefuzz
