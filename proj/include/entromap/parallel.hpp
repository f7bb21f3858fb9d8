#pragma once

// Deterministic data-parallel helper. Work is split into fixed-size blocks
// whose internal loops run sequentially, so any reduction folded in block
// order produces the same floating-point result at every thread count.

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace entromap {

// Rows (or columns) per parallel block. Fixed, never derived from the thread
// count: reductions fold block partials in ascending block order.
inline constexpr std::size_t parallel_block = 256;

class ThreadPool {
public:
    explicit ThreadPool(unsigned workers) {
        for (unsigned t = 0; t < workers; ++t)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::unique_lock lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    // body(b) for b in [0, nblocks), any order; the calling thread
    // participates. The first exception thrown by any block is rethrown here
    // after every claimed block has finished.
    void for_each_block(std::size_t nblocks, const std::function<void(std::size_t)>& body) {
        if (nblocks == 0) return;
        if (threads_.empty() || nblocks == 1) {
            for (std::size_t b = 0; b < nblocks; ++b) body(b);
            return;
        }
        auto job = std::make_shared<Job>();
        job->body = &body;
        job->total = nblocks;
        {
            std::unique_lock lk(mu_);
            job_ = job;
        }
        cv_.notify_all();
        run_share(*job);
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [&] { return job->finished == job->total; });
        if (job_ == job) job_.reset();
        if (job->error) std::rethrow_exception(job->error);
    }

    static ThreadPool& shared() {
        static ThreadPool pool(default_workers());
        return pool;
    }

    static unsigned default_workers() {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw > 1 ? hw - 1 : 0;  // the calling thread always participates
    }

private:
    struct Job {
        const std::function<void(std::size_t)>* body = nullptr;
        std::size_t total = 0;
        std::atomic<std::size_t> next{0};
        std::size_t finished = 0;  // guarded by mu_
        std::exception_ptr error;  // first failure, guarded by mu_
    };

    void run_share(Job& job) {
        for (;;) {
            const std::size_t b = job.next.fetch_add(1);
            if (b >= job.total) return;
            std::exception_ptr err;
            try {
                (*job.body)(b);
            } catch (...) {
                err = std::current_exception();
            }
            std::unique_lock lk(mu_);
            if (err && !job.error) job.error = err;
            if (++job.finished == job.total) done_cv_.notify_all();
        }
    }

    void worker_loop() {
        std::shared_ptr<Job> last;  // never re-enter a job this thread drained
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || (job_ != nullptr && job_ != last); });
                if (stop_) return;
                job = job_;
            }
            run_share(*job);
            last = std::move(job);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::shared_ptr<Job> job_;
    bool stop_ = false;
};

// body(b) over ceil(count / parallel_block) blocks; block b covers indices
// [b*parallel_block, min(count, (b+1)*parallel_block)).
template <class F>
void parallel_blocks(std::size_t count, F&& body) {
    const std::size_t nblocks = (count + parallel_block - 1) / parallel_block;
    const std::function<void(std::size_t)> fn = std::forward<F>(body);
    ThreadPool::shared().for_each_block(nblocks, fn);
}

}  // namespace entromap
