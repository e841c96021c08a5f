#include <pthread.h>

extern int var1;
void *VHDLPosedge_S2(void *arg);
int VHDLPosedge_count(void);

// Runs stage S2 on a worker thread and on the main thread.
int main(int argc, char **argv)
{
    pthread_t worker;
    pthread_create(&worker, 0, VHDLPosedge_S2, 0);
    VHDLPosedge_S2(0);
    pthread_join(worker, 0);
    return VHDLPosedge_count();
}
