import logging
import multiprocessing
import sys
import traceback
from multiprocessing.connection import wait

from .errors import WorkerFailure
from .tools import analyze_traceback

logger = logging.getLogger('Worker')


class WorkerProcess(multiprocessing.Process):
    """
    Process that evaluates `func` on its share of the tasks and pipes every result back to the main process, tagged
    with the task index. An uncaught exception is analyzed, serialized and piped back in place of the result so that
    the main process can report it with the worker's traceback.
    """

    def __init__(self, func, tasks, name=None):
        super(WorkerProcess, self).__init__(name=name)
        self.func = func
        self.tasks = list(tasks)
        self.remote_conn, self.local_conn = multiprocessing.Pipe(duplex=False)

    def exception_handler(self, index, e):
        logger.debug('Worker: Failure detected on process {}'.format(self.name))
        etype, evalue, tb = sys.exc_info()
        analyzed_traceback = analyze_traceback(tb, inspection_level=1)
        payload = {'Error Type': etype.__name__,
                   'Error Message': '%s' % evalue,
                   'Task': index,
                   'Process': self.name,
                   'Traceback': analyzed_traceback}
        payload.update(getattr(e, 'provenance', lambda: {})())
        try:
            self.local_conn.send(('error', index, payload))
        except Exception:
            logger.error('Worker: Could not send traceback data to main process.')

    def run(self):
        clsname = self.__class__.__name__
        logger.debug('{cls}: Starting {cls}: {name}'.format(cls=clsname, name=self.name))
        for index, task in self.tasks:
            try:
                result = self.func(task)
            except Exception as e:
                logger.info('{cls}: Error encountered in {name}'.format(cls=clsname, name=self.name))
                traceback.print_exc()
                self.exception_handler(index, e)
                break
            self.local_conn.send(('ok', index, result))
        logger.debug('{cls}: Preparing to exit {cls}: {name}'.format(cls=clsname, name=self.name))


def run_tasks(func, tasks, threads=1):
    """
    Evaluate `func` on every task, in worker processes when `threads` > 1. Results come back in task order.

    :param func: callable taking one task
    :param tasks: sequence of tasks
    :param threads: number of worker processes
    :return: list of results
    """
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]

    threads = min(threads, len(tasks))
    indexed = list(enumerate(tasks))
    workers = [WorkerProcess(func, indexed[i::threads], name='worker-%d' % i) for i in range(threads)]
    for w in workers:
        w.start()
        # the child owns the sending end now
        w.local_conn.close()
    results = [None] * len(tasks)
    pending = {w.remote_conn: w for w in workers}
    received = 0
    try:
        while received < len(tasks) and pending:
            for conn in wait(list(pending)):
                try:
                    status, index, value = conn.recv()
                except EOFError:
                    worker = pending.pop(conn)
                    logger.debug('Worker: %s closed its pipe', worker.name)
                    continue
                if status == 'error':
                    raise WorkerFailure('Task %d failed in %s: %s: %s'
                                        % (index, value['Process'], value['Error Type'], value['Error Message']),
                                        payload=value, module=value.get('Module'), operation=value.get('Operation'))
                results[index] = value
                received += 1
        if received < len(tasks):
            raise WorkerFailure('Workers exited after %d of %d tasks' % (received, len(tasks)))
    finally:
        for w in workers:
            if w.is_alive() and received < len(tasks):
                w.terminate()
            w.join()
    logger.debug('Worker: %d tasks done on %d processes', len(tasks), threads)
    return results
