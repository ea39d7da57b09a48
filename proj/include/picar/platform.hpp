#pragma once

#include <chrono>
#include <thread>

namespace picar {

/// Number of CPUs this process may run on.
unsigned available_cores();

/// Pins the calling thread to `core`. Returns false if the OS refused.
bool pin_current_thread(int core);
bool pin_thread(std::thread& thread, int core);

/// Tries SCHED_FIFO at `priority` for the calling thread; false without
/// the needed privileges.
bool try_realtime_priority(int priority);

/// Absolute sleep on the monotonic clock; retries on EINTR.
void sleep_until(std::chrono::steady_clock::time_point when);

/// Sets the calling thread's timer slack (Linux), for tight periodic wakeups.
void set_timer_slack_ns(unsigned long ns);

}  // namespace picar
